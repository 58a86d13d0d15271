"""Aggregate accuracy measures over simulation repetitions."""

from typing import Sequence

import numpy as np
from scipy.stats import trim_mean

from glm_subsampling.errors import DivisionByZero, EmptyInput, ShapeMismatch


def error_norms(estimates: Sequence[np.ndarray], beta_ref) -> np.ndarray:
    if len(estimates) == 0:
        raise EmptyInput("no estimates to aggregate")
    stacked = np.vstack([np.asarray(beta, dtype=float) for beta in estimates])
    beta_ref = np.asarray(beta_ref, dtype=float).reshape(-1)
    if stacked.shape[1] != beta_ref.shape[0]:
        raise ShapeMismatch(f"estimates have {stacked.shape[1]} coefficients, reference has {beta_ref.shape[0]}")
    return np.linalg.norm(stacked - beta_ref, axis=1)


def emse(estimates: Sequence[np.ndarray], beta_ref, trim_alpha: float = 0.0) -> float:
    """Mean of the unsquared errors ||beta_s - beta_ref||.

    With trim_alpha > 0 the mean drops that fraction of the smallest and the
    largest errors before averaging.
    """
    if not 0.0 <= trim_alpha < 0.5:
        raise ValueError("trim_alpha must lie in [0, 0.5)")
    norms = error_norms(estimates, beta_ref)
    if trim_alpha == 0.0:
        return float(np.mean(norms))
    return float(trim_mean(norms, trim_alpha))


def relative_efficiency(emse_weighted: float, emse_unweighted: float) -> float:
    if emse_unweighted <= 0:
        raise DivisionByZero("unweighted eMSE is zero")
    return float(emse_weighted / emse_unweighted)


def empirical_variance(estimates: Sequence[np.ndarray]) -> float:
    """Trace of the sample covariance of the estimates (NaN for a single repetition)."""
    if len(estimates) == 0:
        raise EmptyInput("no estimates to aggregate")
    stacked = np.vstack([np.asarray(beta, dtype=float) for beta in estimates])
    if stacked.shape[0] < 2:
        return float("nan")
    return float(np.sum(np.var(stacked, axis=0, ddof=1)))


def loewner_leq(a, b, tol: float = 0.0) -> bool:
    """True when b - a is positive semi-definite up to -tol."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"cannot compare matrices of shapes {a.shape} and {b.shape}")
    diff = b - a
    return bool(np.linalg.eigvalsh(0.5 * (diff + diff.T)).min() >= -tol)
