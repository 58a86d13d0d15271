"""Pilot estimation, optimal subsampling probabilities and with-replacement draws.

The probability computation reads covariates only; responses enter solely
through the pilot fit.
"""

import logging
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from glm_subsampling.errors import (
    DegenerateMarginal,
    PilotSingular,
    PilotTooLarge,
    SingularPhi,
    ZeroWeights,
)
from glm_subsampling.glm_core import Dataset, GlmFamily, fisher_info
from glm_subsampling.solver import FitOptions, FitResult, factor_spd, fit_mle, inverse_spd

logger = logging.getLogger(__name__)


class CriterionKind(str, Enum):
    A_OPT = "aopt"
    L_OPT = "lopt"
    GENERAL_L = "general"


class Criterion(BaseModel):
    """A-optimality (L = I), L-optimality (L = Phi) or a fixed matrix L."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: CriterionKind
    l_matrix: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _check_matrix(self):
        if (self.kind is CriterionKind.GENERAL_L) != (self.l_matrix is not None):
            raise ValueError("an L matrix is required for, and only for, the general criterion")
        return self

    @classmethod
    def a_opt(cls) -> "Criterion":
        return cls(kind=CriterionKind.A_OPT)

    @classmethod
    def l_opt(cls) -> "Criterion":
        return cls(kind=CriterionKind.L_OPT)

    @classmethod
    def general(cls, l_matrix) -> "Criterion":
        return cls(kind=CriterionKind.GENERAL_L, l_matrix=np.atleast_2d(np.asarray(l_matrix, dtype=float)))

    @classmethod
    def parse(cls, value) -> "Criterion":
        if isinstance(value, Criterion):
            return value
        token = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"aopt": CriterionKind.A_OPT, "aos": CriterionKind.A_OPT, "lopt": CriterionKind.L_OPT,
                   "los": CriterionKind.L_OPT}
        if token not in aliases:
            raise ValueError(f"unknown criterion '{value}', expected aopt or lopt")
        return cls(kind=aliases[token])

    @property
    def label(self) -> str:
        return {CriterionKind.A_OPT: "A-OS", CriterionKind.L_OPT: "L-OS", CriterionKind.GENERAL_L: "general-L"}[
            self.kind
        ]

    def transform(self, phi: np.ndarray) -> np.ndarray:
        """The matrix L applied to Phi^{-1} x."""
        if self.kind is CriterionKind.A_OPT:
            return np.eye(phi.shape[0])
        if self.kind is CriterionKind.L_OPT:
            return phi
        return self.l_matrix


class PilotEstimate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    beta_p: np.ndarray
    phi_p: np.ndarray
    pilot_indices: np.ndarray
    r_p: int
    fit: Optional[FitResult] = None


class SamplingPlan(BaseModel):
    """Full-data sampling probabilities and their normalizer m_hat.

    ``n * m_hat * probabilities[i]`` recovers the unnormalized weight of row i.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    probabilities: np.ndarray
    criterion: Criterion
    m_hat: float

    @field_validator("probabilities", mode="before")
    @classmethod
    def _check_probabilities(cls, value):
        pi = np.asarray(value, dtype=float).reshape(-1)
        if pi.size == 0 or np.any(pi < 0) or not np.all(np.isfinite(pi)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(pi.sum() - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {pi.sum():.15g}, not 1")
        return pi

    @property
    def n(self) -> int:
        return self.probabilities.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.n * self.m_hat * self.probabilities

    def excluding(self, indices) -> "SamplingPlan":
        """Zero the given rows and renormalize the rest (m_hat keeps the 1/n scale)."""
        weights = self.weights.copy()
        weights[np.asarray(indices, dtype=np.int64)] = 0.0
        total = weights.sum()
        if total <= 0:
            raise ZeroWeights("no rows left to sample once the pilot rows are removed")
        return SamplingPlan(probabilities=weights / total, criterion=self.criterion, m_hat=total / self.n)


class SubsampleDraw(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    indices: np.ndarray
    probabilities_at_draw: np.ndarray

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.indices.shape != self.probabilities_at_draw.shape:
            raise ValueError("one probability per drawn index is required")
        return self

    @property
    def r(self) -> int:
        return self.indices.shape[0]

    @classmethod
    def from_plan(cls, plan: SamplingPlan, indices) -> "SubsampleDraw":
        indices = np.asarray(indices, dtype=np.int64)
        if np.any(indices < 0) or np.any(indices >= plan.n):
            raise ValueError("drawn index outside the dataset")
        return cls(indices=indices, probabilities_at_draw=plan.probabilities[indices])


class AliasTable:
    """Vose alias table: O(n) construction, O(1) per categorical draw."""

    def __init__(self, probabilities: np.ndarray):
        probabilities = np.asarray(probabilities, dtype=float)
        n = probabilities.shape[0]
        scaled = probabilities * n / probabilities.sum()
        prob = np.ones(n)
        alias = np.arange(n)

        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            less = small.pop()
            more = large.pop()
            prob[less] = scaled[less]
            alias[less] = more
            scaled[more] -= 1.0 - scaled[less]
            if scaled[more] < 1.0:
                small.append(more)
            else:
                large.append(more)
        # leftovers carry numerical slack only
        for i in small + large:
            prob[i] = 1.0
            alias[i] = i

        self.prob = prob
        self.alias = alias

    def draw(self, size: int, rng: np.random.Generator) -> np.ndarray:
        columns = rng.integers(0, self.prob.shape[0], size=size)
        keep = rng.random(size) < self.prob[columns]
        return np.where(keep, columns, self.alias[columns])


def simple_random_pilot(n: int, r_p: int, rng: np.random.Generator) -> np.ndarray:
    """r_p distinct row indices chosen uniformly without replacement."""
    if r_p > n:
        raise PilotTooLarge(f"pilot size {r_p} exceeds the {n} available rows")
    if r_p < 1:
        raise ValueError("pilot size must be at least 1")
    return rng.choice(n, size=r_p, replace=False)


def case_control_pilot_probabilities(y, p_m: Optional[float] = None) -> np.ndarray:
    """pi_0i proportional to c0 (1 - y_i) + c1 y_i with c0 = 1/(2(1-p_m)), c1 = 1/(2 p_m)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("case-control pilot needs binary responses")
    if p_m is None:
        p_m = float(y.mean())
    if p_m <= 0.0 or p_m >= 1.0:
        raise DegenerateMarginal(f"marginal probability {p_m} must lie strictly between 0 and 1")
    c0 = 1.0 / (2.0 * (1.0 - p_m))
    c1 = 1.0 / (2.0 * p_m)
    raw = (c0 * (1.0 - y) + c1 * y) / y.shape[0]
    return raw / raw.sum()


def case_control_pilot(y, r_p: int, rng: np.random.Generator, p_m: Optional[float] = None):
    """Draw r_p pilot rows with replacement from the case-control probabilities.

    Returns the indices and the probabilities they were drawn with.
    """
    if r_p < 1:
        raise ValueError("pilot size must be at least 1")
    probabilities = case_control_pilot_probabilities(y, p_m)
    indices = AliasTable(probabilities).draw(r_p, rng)
    return indices, probabilities[indices]


def pilot_estimate(
    family: GlmFamily,
    data: Dataset,
    pilot_indices,
    options: Optional[FitOptions] = None,
    pilot_probabilities=None,
) -> PilotEstimate:
    """Pilot MLE and information matrix from the pilot rows.

    When pilot_probabilities are given (non-uniform pilot), both the fit and
    phi_p use estimation weights 1/(n * pi_0i).
    """
    options = options or FitOptions()
    pilot_indices = np.asarray(pilot_indices, dtype=np.int64)
    # reports unmeasured rows by their full-data index
    data.responses_at(pilot_indices)
    pilot = data.subset(pilot_indices)
    weights = None
    if pilot_probabilities is not None:
        weights = 1.0 / (data.n * np.asarray(pilot_probabilities, dtype=float))

    fit = fit_mle(family, pilot, weights, options)
    if not fit.converged:
        logger.warning("pilot fit did not converge after %d iterations", fit.iterations)
    phi = fisher_info(family, pilot.covariates_only(), fit.beta, weights)
    phi, _ = factor_spd(phi, options.ridge_jitter, PilotSingular, "pilot information matrix")
    return PilotEstimate(
        beta_p=fit.beta, phi_p=phi, pilot_indices=pilot_indices, r_p=int(pilot_indices.shape[0]), fit=fit
    )


def optimal_weights(
    family: GlmFamily,
    x: np.ndarray,
    beta: np.ndarray,
    phi: np.ndarray,
    criterion: Criterion,
    singular_error=SingularPhi,
):
    """sqrt(b''(x_i^T beta)) * ||L Phi^{-1} x_i|| for every row."""
    scale = np.sqrt(family.b_double_prime(x @ beta))
    if criterion.kind is CriterionKind.L_OPT:
        norms = np.linalg.norm(x, axis=1)
    else:
        phi_inv = inverse_spd(phi, 0.0, singular_error, "Phi")
        transformed = x @ phi_inv
        if criterion.kind is CriterionKind.GENERAL_L:
            transformed = transformed @ criterion.l_matrix.T
        norms = np.linalg.norm(transformed, axis=1)
    return scale * norms


def plan_from_weights(weights: np.ndarray, criterion: Criterion) -> SamplingPlan:
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        raise ZeroWeights("all subsampling weights are zero")
    return SamplingPlan(probabilities=weights / total, criterion=criterion, m_hat=float(weights.mean()))


def os_probabilities(family: GlmFamily, data: Dataset, pilot: PilotEstimate, criterion: Criterion) -> SamplingPlan:
    """Optimal subsampling probabilities with beta_0 and Phi replaced by pilot estimates."""
    weights = optimal_weights(family, data.x, pilot.beta_p, pilot.phi_p, criterion)
    return plan_from_weights(weights, criterion)


def sample_with_replacement(
    plan: SamplingPlan,
    r: int,
    rng: np.random.Generator,
    method: str = "alias",
) -> SubsampleDraw:
    """r i.i.d. categorical draws from the plan."""
    if r < 1:
        raise ValueError("subsample size must be at least 1")
    if method == "alias":
        indices = AliasTable(plan.probabilities).draw(r, rng)
    elif method == "inverse_cdf":
        cumulative = np.cumsum(plan.probabilities)
        indices = np.searchsorted(cumulative, rng.random(r) * cumulative[-1], side="right")
        indices = np.minimum(indices, plan.n - 1)
    else:
        raise ValueError(f"unknown sampling method '{method}'")
    return SubsampleDraw.from_plan(plan, indices)
