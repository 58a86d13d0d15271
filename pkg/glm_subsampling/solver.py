"""Newton's method for the (optionally estimation-weighted) GLM likelihood."""

import logging
import time
from typing import List, Optional, Sequence, Tuple, Type

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from glm_subsampling.errors import (
    EmptyInput,
    NonFiniteLinearPredictor,
    NotConverged,
    SeparationSuspected,
    SingularHessian,
    SubsamplingError,
    TooFewRows,
)
from glm_subsampling.glm_core import (
    Dataset,
    FamilyKind,
    GlmFamily,
    as_coefficients,
    estimation_weight_vector,
    fisher_info,
    neg_log_likelihood,
    score,
)

logger = logging.getLogger(__name__)


class FitOptions(BaseModel):
    tol_grad: float = Field(default=1e-8, gt=0)
    tol_step: float = Field(default=1e-10, ge=0)
    max_iter: int = Field(default=100, ge=1)
    ridge_jitter: float = Field(default=1e-8, ge=0)
    max_halvings: int = Field(default=30, ge=0)
    separation_norm: float = Field(default=1e3, gt=0)
    anchor: Optional[List[float]] = None
    anchor_drift: float = Field(default=5.0, gt=0)
    init: Optional[List[float]] = None


class FitResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    beta: np.ndarray
    iterations: int
    converged: bool
    final_grad_norm: float
    wall_time: float
    objective: float

    def raise_if_not_converged(self) -> "FitResult":
        if not self.converged:
            raise NotConverged(
                f"stopped after {self.iterations} iterations with gradient norm {self.final_grad_norm:.3e}",
                result=self,
            )
        return self


def factor_spd(
    matrix: np.ndarray,
    ridge_jitter: float = 1e-8,
    error: Type[SubsamplingError] = SingularHessian,
    what: str = "matrix",
) -> Tuple[np.ndarray, tuple]:
    """Cholesky-factor a symmetric matrix, adding ridge_jitter*(trace/p)*I once on failure.

    Rank-deficient input is rejected before any jitter. Returns the matrix that
    was actually factored together with its factor.
    """
    matrix = np.asarray(matrix, dtype=float)
    p = matrix.shape[0]
    if not np.all(np.isfinite(matrix)):
        raise error(f"{what} has non-finite entries")
    if np.linalg.matrix_rank(matrix) < p:
        raise error(f"{what} is rank deficient")
    try:
        return matrix, cho_factor(matrix, lower=True)
    except LinAlgError:
        jittered = matrix + ridge_jitter * np.trace(matrix) / p * np.eye(p)
        try:
            factor = cho_factor(jittered, lower=True)
        except LinAlgError as exc:
            raise error(f"{what} is not positive definite after ridge jitter") from exc
        logger.warning("%s needed ridge jitter to factor", what)
        return jittered, factor


def solve_spd(matrix, rhs, ridge_jitter=1e-8, error=SingularHessian, what="matrix") -> np.ndarray:
    _, factor = factor_spd(matrix, ridge_jitter, error, what)
    return cho_solve(factor, rhs)


def inverse_spd(matrix, ridge_jitter=1e-8, error=SingularHessian, what="matrix") -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    inverse = solve_spd(matrix, np.eye(matrix.shape[0]), ridge_jitter, error, what)
    return 0.5 * (inverse + inverse.T)


def _objective(family, data, beta, weights) -> float:
    try:
        value = neg_log_likelihood(family, data, beta, weights)
    except NonFiniteLinearPredictor:
        return np.inf
    return value if np.isfinite(value) else np.inf


def _check_separation(family, data, beta, weights, options):
    if family.kind is not FamilyKind.LOGISTIC:
        return
    if np.linalg.norm(beta) > options.separation_norm:
        raise SeparationSuspected(f"coefficient norm exceeded {options.separation_norm:g}")
    active = weights > 0
    fitted = family.b_prime(data.x[active] @ beta)
    if np.max(np.abs(data.y[active] - fitted)) < 1e-6:
        raise SeparationSuspected("fitted probabilities reproduce the labels exactly")


def _check_anchor(family, beta, options):
    """Quasi-separated fits stop on a vanishing gradient far out along the separating direction."""
    if family.kind is not FamilyKind.LOGISTIC or options.anchor is None:
        return
    anchor = np.asarray(options.anchor, dtype=float)
    limit = options.anchor_drift * max(float(np.linalg.norm(anchor)), 1.0)
    drift = float(np.linalg.norm(beta - anchor))
    if drift > limit:
        raise SeparationSuspected(f"estimate moved {drift:.3g} from the anchor, more than {limit:.3g}")


def fit_mle(
    family: GlmFamily,
    data: Dataset,
    estimation_weights=None,
    options: Optional[FitOptions] = None,
) -> FitResult:
    """Maximize sum_i w_i {y_i x_i^T beta - b(x_i^T beta)} by damped Newton steps.

    The linear family is solved exactly by one weighted least-squares solve.
    Weights are rescaled to mean one, so multiplying them by a constant leaves
    the result unchanged.
    """
    options = options or FitOptions()
    start = time.perf_counter()
    y = data.responses_at()
    if data.n < data.p:
        raise TooFewRows(f"need at least p={data.p} rows, got {data.n}")
    weights = estimation_weight_vector(estimation_weights, data.n)
    if weights.sum() <= 0:
        raise ValueError("estimation weights are all zero")
    weights = weights / weights.mean()

    if family.kind is FamilyKind.LOGISTIC:
        labels = y[weights > 0]
        if np.all(labels == labels[0]):
            raise SeparationSuspected("all responses belong to one class")

    if family.kind is FamilyKind.LINEAR:
        gram = (data.x * weights[:, None]).T @ data.x
        beta = solve_spd(
            0.5 * (gram + gram.T), data.x.T @ (weights * y), options.ridge_jitter, SingularHessian, "Gram matrix"
        )
        grad_norm = float(np.linalg.norm(score(family, data, beta, weights)))
        return FitResult(
            beta=beta,
            iterations=1,
            converged=True,
            final_grad_norm=grad_norm,
            wall_time=time.perf_counter() - start,
            objective=_objective(family, data, beta, weights),
        )

    if options.init is not None:
        beta = as_coefficients(options.init, data.p)
    else:
        beta = np.zeros(data.p)
    current = _objective(family, data, beta, weights)
    if not np.isfinite(current):
        raise NonFiniteLinearPredictor("initial coefficients give a non-finite objective")

    iterations = 0
    converged = False
    grad = score(family, data, beta, weights)
    grad_norm = float(np.linalg.norm(grad))
    while not converged and iterations < options.max_iter:
        if grad_norm < options.tol_grad:
            converged = True
            break
        hessian = fisher_info(family, data, beta, weights)
        step = solve_spd(hessian, grad, options.ridge_jitter, SingularHessian, "Hessian")

        # objective changes below rounding level count as no increase
        ceiling = current + 1e-12 * max(abs(current), 1.0)
        scale = 1.0
        candidate = beta - step
        value = _objective(family, data, candidate, weights)
        halvings = 0
        while value > ceiling and halvings < options.max_halvings:
            scale *= 0.5
            candidate = beta - scale * step
            value = _objective(family, data, candidate, weights)
            halvings += 1
        if value > ceiling:
            # no descent along the Newton direction; keep the last iterate
            break

        iterations += 1
        relative_step = scale * np.linalg.norm(step) / max(np.linalg.norm(beta), 1.0)
        beta, current = candidate, value
        _check_separation(family, data, beta, weights, options)
        grad = score(family, data, beta, weights)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < options.tol_grad or relative_step < options.tol_step:
            converged = True

    if converged:
        _check_separation(family, data, beta, weights, options)
    _check_anchor(family, beta, options)
    if not converged:
        logger.warning(
            "Newton solver stopped after %d iterations, gradient norm %.3e", iterations, grad_norm
        )
    return FitResult(
        beta=beta,
        iterations=iterations,
        converged=converged,
        final_grad_norm=grad_norm,
        wall_time=time.perf_counter() - start,
        objective=current,
    )


def average_iterations(results: Sequence[FitResult]) -> float:
    if len(results) == 0:
        raise EmptyInput("no fit results to average")
    return float(np.mean([result.iterations for result in results]))
