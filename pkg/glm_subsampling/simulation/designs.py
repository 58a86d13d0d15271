"""Covariate designs and response generators for the simulation studies."""

from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import expit

from glm_subsampling.glm_core import FamilyKind, GlmFamily, get_family


class DesignKind(str, Enum):
    MZ_NORMAL = "mzNormal"
    NZ_NORMAL = "nzNormal"
    UN_NORMAL = "unNormal"
    MIX_NORMAL = "mixNormal"
    POISSON_CASE1 = "poissonCase1"
    POISSON_CASE2 = "poissonCase2"
    GA = "GA"
    T3 = "T3"
    T1 = "T1"
    EXP = "EXP"


_LOGISTIC_DESIGNS = {DesignKind.MZ_NORMAL, DesignKind.NZ_NORMAL, DesignKind.UN_NORMAL, DesignKind.MIX_NORMAL}
_POISSON_DESIGNS = {DesignKind.POISSON_CASE1, DesignKind.POISSON_CASE2}

# Poisson runs at d=20 by default; the full-scale configs set dim = 100.
DEFAULT_DIM = {FamilyKind.LOGISTIC: 20, FamilyKind.POISSON: 20, FamilyKind.LINEAR: 30}

BETA0_PRESETS = {
    "linear-30": np.concatenate([np.full(5, 0.1), np.full(20, 10.0), np.full(5, 0.1)]),
}


class DesignSpec(BaseModel):
    kind: DesignKind
    dim: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _default_dim(self):
        if self.dim is None:
            self.dim = DEFAULT_DIM[self.family_kind]
        return self

    @property
    def family_kind(self) -> FamilyKind:
        if self.kind in _LOGISTIC_DESIGNS:
            return FamilyKind.LOGISTIC
        if self.kind in _POISSON_DESIGNS:
            return FamilyKind.POISSON
        return FamilyKind.LINEAR

    @property
    def heavy_tailed(self) -> bool:
        """T1 and T3 break the fourth-moment condition behind the asymptotics."""
        return self.kind in (DesignKind.T1, DesignKind.T3)


def equicorrelated_covariance(dim: int) -> np.ndarray:
    """Sigma_ij = 0.5 ** I(i != j)."""
    return 0.5 * np.ones((dim, dim)) + 0.5 * np.eye(dim)


def scaled_covariance(dim: int, leading: float) -> np.ndarray:
    """U Sigma U with U = diag(leading, leading/2, ..., leading/dim)."""
    u = leading / np.arange(1, dim + 1)
    return equicorrelated_covariance(dim) * np.outer(u, u)


def multivariate_normal(mean, covariance: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    chol = np.linalg.cholesky(covariance)
    z = rng.standard_normal((n, covariance.shape[0]))
    return z @ chol.T + mean


def multivariate_t(covariance: np.ndarray, df: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Z / sqrt(W / df) with Z ~ N(0, covariance) and W ~ chi^2_df."""
    z = multivariate_normal(0.0, covariance, n, rng)
    w = rng.chisquare(df, size=n)
    return z / np.sqrt(w / df)[:, None]


def generate_design(spec: DesignSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """n x dim raw covariates (no intercept column)."""
    d = spec.dim
    kind = spec.kind
    if kind is DesignKind.MZ_NORMAL:
        return multivariate_normal(0.0, equicorrelated_covariance(d), n, rng)
    if kind is DesignKind.NZ_NORMAL:
        return multivariate_normal(0.5, equicorrelated_covariance(d), n, rng)
    if kind is DesignKind.UN_NORMAL:
        return multivariate_normal(0.0, scaled_covariance(d, 1.0), n, rng)
    if kind is DesignKind.MIX_NORMAL:
        centres = np.where(rng.random(n) < 0.5, 0.5, -0.5)
        return multivariate_normal(0.0, equicorrelated_covariance(d), n, rng) + centres[:, None]
    if kind is DesignKind.POISSON_CASE1:
        return rng.uniform(-0.5, 0.5, size=(n, d))
    if kind is DesignKind.POISSON_CASE2:
        half = d // 2
        return np.column_stack([rng.uniform(-0.5, 0.5, size=(n, half)), rng.uniform(-1.0, 1.0, size=(n, d - half))])
    if kind is DesignKind.GA:
        return multivariate_normal(1.0, scaled_covariance(d, 5.0), n, rng)
    if kind is DesignKind.T3:
        return multivariate_t(scaled_covariance(d, 5.0), 3.0, n, rng)
    if kind is DesignKind.T1:
        return multivariate_t(scaled_covariance(d, 5.0), 1.0, n, rng)
    return rng.exponential(scale=0.5, size=(n, d))


def generate_response(
    family: Union[GlmFamily, str],
    x: np.ndarray,
    beta0,
    rng: np.random.Generator,
    noise_sd: float = 3.0,
) -> np.ndarray:
    """Responses from the family's conditional law at beta0, stored as floats."""
    family = get_family(family)
    eta = np.asarray(x, dtype=float) @ np.asarray(beta0, dtype=float)
    if family.kind is FamilyKind.LOGISTIC:
        return rng.binomial(1, expit(eta)).astype(float)
    if family.kind is FamilyKind.POISSON:
        return rng.poisson(family.b_prime(eta)).astype(float)
    return eta + noise_sd * rng.standard_normal(eta.shape[0])


def default_beta0(family_kind: FamilyKind, dim: int) -> np.ndarray:
    if family_kind is FamilyKind.POISSON:
        return np.full(dim, 0.5)
    if family_kind is FamilyKind.LINEAR and dim == 30:
        return BETA0_PRESETS["linear-30"].copy()
    return np.ones(dim)


def resolve_beta0(value: Union[None, str, float, Sequence[float]], family_kind: FamilyKind, dim: int) -> np.ndarray:
    """A constant, an explicit list, a named preset, or the design default."""
    if value is None:
        return default_beta0(family_kind, dim)
    if isinstance(value, str):
        if value in BETA0_PRESETS:
            beta = BETA0_PRESETS[value].copy()
        else:
            parts = [part for part in value.replace(",", " ").split() if part]
            beta = np.array([float(part) for part in parts])
    else:
        beta = np.atleast_1d(np.asarray(value, dtype=float))
    if beta.shape[0] == 1:
        beta = np.full(dim, beta[0])
    if beta.shape[0] != dim:
        raise ValueError(f"beta0 has {beta.shape[0]} entries but the model has {dim} coefficients")
    return beta
