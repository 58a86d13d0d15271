"""Population matrices behind the asymptotic variances, and numerical checks on them.

All expectations are taken at the true beta_0 over a covariate sample (or a
discrete distribution given by point masses). Phi is estimated first and the
remaining objects are evaluated with that Phi.
"""

import logging
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from glm_subsampling.errors import SingularMatrix, ZeroProbability
from glm_subsampling.glm_core import Dataset, GlmFamily, as_coefficients, get_family, weighted_gram
from glm_subsampling.sampling import Criterion, SamplingPlan, optimal_weights
from glm_subsampling.simulation.designs import DesignSpec, generate_design
from glm_subsampling.simulation.metrics import loewner_leq
from glm_subsampling.solver import inverse_spd

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_COUNT = 1_000_000


class AsymptoticMatrices(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    phi: np.ndarray
    gamma: np.ndarray
    omega: np.ndarray
    lambda_: np.ndarray
    m: float
    sample_count: int


class EfficiencyComparison(BaseModel):
    """Outcome of both Loewner comparisons between the two estimators' variance terms."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    first_term_ok: bool
    second_term_ok: bool
    tolerance: float
    unweighted_first: np.ndarray
    weighted_first: np.ndarray
    unweighted_second: np.ndarray
    weighted_second: np.ndarray

    @property
    def holds(self) -> bool:
        return self.first_term_ok and self.second_term_ok


def _masses(masses, count: int) -> np.ndarray:
    if masses is None:
        return np.full(count, 1.0 / count)
    masses = np.asarray(masses, dtype=float).reshape(-1)
    if masses.shape[0] != count or np.any(masses < 0) or masses.sum() <= 0:
        raise ValueError("masses must be non-negative with one entry per sample row")
    return masses / masses.sum()


def monte_carlo_matrices(
    family: Union[GlmFamily, str],
    sample,
    beta0,
    criterion: Criterion,
    masses=None,
) -> AsymptoticMatrices:
    """Plug-in estimates of Phi, Gamma, Omega, Lambda and m.

    With ``masses`` the rows are treated as the support of a discrete
    distribution and the expectations are exact.
    """
    family = get_family(family)
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    if x.shape[0] == 1 and np.ndim(sample) == 1:
        x = x.T
    beta0 = as_coefficients(beta0, x.shape[1])
    mass = _masses(masses, x.shape[0])

    curvature = family.b_double_prime(x @ beta0)
    phi = weighted_gram(x, mass * curvature)
    w = optimal_weights(family, x, beta0, phi, criterion)

    inverse_w = np.zeros_like(w)
    positive = w > 0
    inverse_w[positive] = 1.0 / w[positive]
    return AsymptoticMatrices(
        phi=phi,
        gamma=weighted_gram(x, mass * curvature * w),
        omega=weighted_gram(x, mass * curvature * w**2),
        lambda_=weighted_gram(x, mass * curvature * inverse_w),
        m=float(np.sum(mass * w)),
        sample_count=int(x.shape[0]),
    )


def design_matrices(
    family: Union[GlmFamily, str],
    spec: DesignSpec,
    beta0,
    criterion: Criterion,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    rng: Optional[np.random.Generator] = None,
) -> AsymptoticMatrices:
    """Monte Carlo matrices from a fresh design sample of the given size."""
    rng = rng if rng is not None else np.random.default_rng()
    sample = generate_design(spec, sample_count, rng)
    return monte_carlo_matrices(family, sample, beta0, criterion)


def _inverse(matrix: np.ndarray, what: str) -> np.ndarray:
    return inverse_spd(np.atleast_2d(matrix), 0.0, SingularMatrix, what)


def theoretical_variances(mats: AsymptoticMatrices, rho: float) -> Tuple[np.ndarray, np.ndarray]:
    """(Sigma_uw, Sigma_w) for sampling ratio rho = lim r/n."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    gamma_inv = _inverse(mats.gamma, "Gamma")
    phi_inv = _inverse(mats.phi, "Phi")
    sigma_uw = mats.m * gamma_inv + rho * gamma_inv @ mats.omega @ gamma_inv
    sigma_w = mats.m * phi_inv @ mats.lambda_ @ phi_inv + rho * phi_inv
    return 0.5 * (sigma_uw + sigma_uw.T), 0.5 * (sigma_w + sigma_w.T)


def compare_efficiency(mats: AsymptoticMatrices, rel_tol: float = 1e-3) -> EfficiencyComparison:
    """Check Gamma^-1 <= Phi^-1 Lambda Phi^-1 and Phi^-1 <= Gamma^-1 Omega Gamma^-1.

    The tolerance is rel_tol times the spectral norm of Phi^-1 Lambda Phi^-1.
    """
    gamma_inv = _inverse(mats.gamma, "Gamma")
    phi_inv = _inverse(mats.phi, "Phi")
    weighted_first = phi_inv @ mats.lambda_ @ phi_inv
    unweighted_second = gamma_inv @ mats.omega @ gamma_inv
    weighted_first = 0.5 * (weighted_first + weighted_first.T)
    unweighted_second = 0.5 * (unweighted_second + unweighted_second.T)

    tol = rel_tol * float(np.linalg.norm(weighted_first, 2))
    comparison = EfficiencyComparison(
        first_term_ok=loewner_leq(gamma_inv, weighted_first, tol),
        second_term_ok=loewner_leq(phi_inv, unweighted_second, tol),
        tolerance=tol,
        unweighted_first=gamma_inv,
        weighted_first=weighted_first,
        unweighted_second=unweighted_second,
        weighted_second=phi_inv,
    )
    if not comparison.holds:
        logger.warning("efficiency ordering violated beyond tolerance %.3e", tol)
    return comparison


def weighted_variance_identity_check(
    family: Union[GlmFamily, str],
    data: Dataset,
    plan: SamplingPlan,
    beta0,
    r: int,
) -> float:
    """Largest entrywise gap between the weighted estimator's conditional variance and its regrouping.

    Left side: (1/n^2) sum_i b''_i x_i x_i^T {1/(r pi_i) - 1/r + 1}.
    Right side: (m_hat/r) Lambda_n + (1 - 1/r) Phi_n / n, using w_i = n m_hat pi_i.
    """
    family = get_family(family)
    if r < 1:
        raise ValueError("subsample size must be at least 1")
    pi = plan.probabilities
    if np.any(pi <= 0):
        raise ZeroProbability(f"{int(np.sum(pi <= 0))} rows have zero sampling probability")
    n = data.n
    beta0 = as_coefficients(beta0, data.p)
    curvature = family.b_double_prime(data.x @ beta0)

    lhs = weighted_gram(data.x, curvature * (1.0 / (r * pi) - 1.0 / r + 1.0)) / n**2
    weights = plan.weights
    lambda_n = weighted_gram(data.x, curvature / weights) / n
    phi_n = weighted_gram(data.x, curvature) / n
    rhs = plan.m_hat / r * lambda_n + (1.0 - 1.0 / r) * phi_n / n
    return float(np.max(np.abs(lhs - rhs)))
