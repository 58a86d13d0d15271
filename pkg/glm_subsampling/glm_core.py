"""Exponential-family members and the dataset container.

Every family uses the canonical link and a unit dispersion, so the log-density
of a response is ``y * t - b(t)`` up to a constant with ``t = x^T beta``.
"""

from abc import ABC, abstractmethod
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.special import expit

from glm_subsampling.errors import MissingResponses, NonFiniteLinearPredictor, ShapeMismatch

# Coefficient vectors (beta_0, the MLE, pilot and subsample estimates) are plain
# float arrays; as_coefficients validates them.
Coefficients = np.ndarray

POISSON_PREDICTOR_LIMIT = 500.0


class FamilyKind(str, Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"
    POISSON = "poisson"


def _predictor(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise NonFiniteLinearPredictor("linear predictor contains non-finite values")
    return t


class GlmFamily(BaseModel, ABC):
    """A canonical-link GLM family supplying b, b' and b''."""

    model_config = ConfigDict(frozen=True)

    kind: FamilyKind

    @property
    def name(self) -> str:
        return self.kind.value

    @abstractmethod
    def b(self, t: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def b_prime(self, t: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def b_double_prime(self, t: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def check_responses(self, y: np.ndarray) -> None:
        """Raise ValueError when measured responses fall outside the support."""
        pass


class LinearFamily(GlmFamily):
    kind: FamilyKind = FamilyKind.LINEAR

    def b(self, t):
        t = _predictor(t)
        return 0.5 * t * t

    def b_prime(self, t):
        return _predictor(t).copy()

    def b_double_prime(self, t):
        return np.ones_like(_predictor(t))

    def check_responses(self, y):
        return None


class LogisticFamily(GlmFamily):
    kind: FamilyKind = FamilyKind.LOGISTIC

    def b(self, t):
        t = _predictor(t)
        return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))

    def b_prime(self, t):
        return expit(_predictor(t))

    def b_double_prime(self, t):
        mu = self.b_prime(t)
        return mu * (1.0 - mu)

    def check_responses(self, y):
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("logistic responses must be 0 or 1")


class PoissonFamily(GlmFamily):
    kind: FamilyKind = FamilyKind.POISSON

    def _exp(self, t):
        t = _predictor(t)
        if np.any(np.abs(t) > POISSON_PREDICTOR_LIMIT):
            raise NonFiniteLinearPredictor(
                f"|x^T beta| exceeds {POISSON_PREDICTOR_LIMIT:g}; the Poisson fit is diverging"
            )
        return np.exp(t)

    def b(self, t):
        return self._exp(t)

    def b_prime(self, t):
        return self._exp(t)

    def b_double_prime(self, t):
        return self._exp(t)

    def check_responses(self, y):
        if not np.all((y >= 0.0) & (y == np.floor(y))):
            raise ValueError("Poisson responses must be non-negative integers")


_FAMILIES = {
    FamilyKind.LINEAR: LinearFamily,
    FamilyKind.LOGISTIC: LogisticFamily,
    FamilyKind.POISSON: PoissonFamily,
}


def get_family(kind: Union[str, FamilyKind, GlmFamily]) -> GlmFamily:
    if isinstance(kind, GlmFamily):
        return kind
    return _FAMILIES[FamilyKind(kind)]()


def _scalar(value: np.ndarray):
    return value[()] if isinstance(value, np.ndarray) and value.ndim == 0 else value


def b_value(family: GlmFamily, t):
    return _scalar(family.b(t))


def b_prime(family: GlmFamily, t):
    return _scalar(family.b_prime(t))


def b_double_prime(family: GlmFamily, t):
    return _scalar(family.b_double_prime(t))


class Dataset(BaseModel):
    """Covariates for every row plus optional responses.

    A NaN response marks a row whose response has not been measured.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray
    y: Optional[np.ndarray] = None
    has_intercept: bool = False
    feature_names: Optional[List[str]] = None

    @field_validator("x", mode="before")
    @classmethod
    def _check_x(cls, value):
        x = np.asarray(value, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise ShapeMismatch(f"covariates must be a non-empty 2-d matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")
        return x

    @field_validator("y", mode="before")
    @classmethod
    def _check_y(cls, value):
        if value is None:
            return None
        y = np.asarray(value, dtype=float)
        if y.ndim != 1:
            raise ShapeMismatch(f"responses must be a vector, got shape {y.shape}")
        return y

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.y is not None and self.y.shape[0] != self.x.shape[0]:
            raise ShapeMismatch(f"{self.x.shape[0]} covariate rows but {self.y.shape[0]} responses")
        return self

    @classmethod
    def from_arrays(
        cls,
        x,
        y=None,
        add_intercept: bool = True,
        feature_names: Optional[Sequence[str]] = None,
    ) -> "Dataset":
        """Build a dataset, prepending a constant column unless told not to."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        names = list(feature_names) if feature_names is not None else None
        if add_intercept:
            x = np.column_stack([np.ones(x.shape[0]), x])
            if names is not None:
                names = ["intercept"] + names
        return cls(x=x, y=y, has_intercept=add_intercept, feature_names=names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def measured(self) -> np.ndarray:
        if self.y is None:
            return np.zeros(self.n, dtype=bool)
        return np.isfinite(self.y)

    def covariates_only(self) -> "Dataset":
        return self.model_copy(update={"y": None})

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        y = None if self.y is None else self.y[idx]
        return Dataset(x=self.x[idx], y=y, has_intercept=self.has_intercept, feature_names=self.feature_names)

    def responses_at(self, indices=None) -> np.ndarray:
        """Responses of the given rows (all rows by default); every one must be measured."""
        if self.y is None:
            raise MissingResponses("dataset carries no responses")
        rows = np.arange(self.n) if indices is None else np.asarray(indices, dtype=np.int64)
        y = self.y[rows]
        missing = ~np.isfinite(y)
        if np.any(missing):
            unmeasured = np.unique(rows[missing])
            preview = ", ".join(str(row) for row in unmeasured[:10])
            more = "" if unmeasured.shape[0] <= 10 else ", ..."
            raise MissingResponses(
                f"{unmeasured.shape[0]} of the requested rows have no measured response (rows {preview}{more})",
                rows=unmeasured,
            )
        return y

    def check_support(self, family: GlmFamily):
        if self.y is None:
            return
        family.check_responses(self.y[self.measured])


def as_coefficients(beta, p: int) -> Coefficients:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != p:
        raise ShapeMismatch(f"expected {p} coefficients, got {beta.shape[0]}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("coefficients must be finite")
    return beta


def estimation_weight_vector(estimation_weights, n: int) -> np.ndarray:
    if estimation_weights is None:
        return np.ones(n)
    w = np.asarray(estimation_weights, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise ShapeMismatch(f"expected {n} estimation weights, got {w.shape[0]}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("estimation weights must be finite and non-negative")
    return w


def weighted_gram(x: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Symmetric sum of coef_i * x_i x_i^T."""
    gram = (x * coef[:, None]).T @ x
    return 0.5 * (gram + gram.T)


def score(family: GlmFamily, data: Dataset, beta, estimation_weights=None) -> np.ndarray:
    """(1/n) sum_i w_i {b'(x_i^T beta) - y_i} x_i."""
    beta = as_coefficients(beta, data.p)
    w = estimation_weight_vector(estimation_weights, data.n)
    y = data.responses_at()
    residual = family.b_prime(data.x @ beta) - y
    return data.x.T @ (w * residual) / data.n


def fisher_info(family: GlmFamily, data: Dataset, beta, estimation_weights=None) -> np.ndarray:
    """(1/n) sum_i w_i b''(x_i^T beta) x_i x_i^T; responses are not read."""
    beta = as_coefficients(beta, data.p)
    w = estimation_weight_vector(estimation_weights, data.n)
    curvature = family.b_double_prime(data.x @ beta)
    return weighted_gram(data.x, w * curvature) / data.n


def neg_log_likelihood(family: GlmFamily, data: Dataset, beta, estimation_weights=None) -> float:
    """(1/n) sum_i w_i {b(x_i^T beta) - y_i x_i^T beta}."""
    beta = as_coefficients(beta, data.p)
    w = estimation_weight_vector(estimation_weights, data.n)
    y = data.responses_at()
    eta = data.x @ beta
    return float(np.sum(w * (family.b(eta) - y * eta)) / data.n)
