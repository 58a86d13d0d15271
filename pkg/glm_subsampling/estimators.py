"""Two-stage subsample estimators and the plug-in variance of the unweighted one.

Both estimators share the pilot, the sampling probabilities and the draw; they
differ only in the estimation weights of the subsample fit: one for the
unweighted estimator, 1/(n * pi*_i) for the weighted baseline.
"""

import logging
import time
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt

from glm_subsampling.errors import PilotSingular, SeparationSuspected, SingularGammaHat, SingularGram
from glm_subsampling.glm_core import Dataset, FamilyKind, GlmFamily, LinearFamily, weighted_gram
from glm_subsampling.instrumentation import log_execution
from glm_subsampling.sampling import (
    Criterion,
    PilotEstimate,
    SamplingPlan,
    SubsampleDraw,
    case_control_pilot,
    optimal_weights,
    os_probabilities,
    pilot_estimate,
    plan_from_weights,
    sample_with_replacement,
    simple_random_pilot,
)
from glm_subsampling.solver import FitOptions, FitResult, fit_mle, inverse_spd

logger = logging.getLogger(__name__)


class EstimatorKind(str, Enum):
    UNWEIGHTED = "unweighted"
    WEIGHTED = "weighted"


class PilotMethod(str, Enum):
    SRS = "srs"
    CASE_CONTROL = "case_control"


class PilotOptions(BaseModel):
    """How the first stage is drawn, and how often a separated pilot or subsample is drawn again."""

    method: PilotMethod = PilotMethod.SRS
    p_m: Optional[float] = Field(default=None, gt=0, lt=1)
    attempts: int = Field(default=10, ge=1)
    draw_attempts: int = Field(default=10, ge=1)
    exclude_from_draw: bool = False
    warm_start: bool = False


class VarianceEstimate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    v_hat: np.ndarray
    gamma_hat: np.ndarray
    omega_hat: np.ndarray
    trace_v: float

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.v_hat), 0.0, None))

    def confidence_intervals(self, beta, level: float = 0.95) -> np.ndarray:
        """Normal intervals beta +/- z * sqrt(diag V), one row per coefficient."""
        z = norm.ppf(0.5 + level / 2.0)
        half = z * self.standard_errors()
        beta = np.asarray(beta, dtype=float)
        return np.column_stack([beta - half, beta + half])


class SubsampleEstimate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    beta: np.ndarray
    method: EstimatorKind
    criterion: Criterion
    m_hat: float
    draw: SubsampleDraw
    fit: FitResult
    variance: Optional[VarianceEstimate] = None
    pilot: Optional[PilotEstimate] = None
    measured_responses: int = 0
    timings: Dict[str, float] = Field(default_factory=dict)


def _draw_pilot_once(family, data, r_p, rng, options, pilot_options) -> PilotEstimate:
    if pilot_options.method is PilotMethod.CASE_CONTROL:
        indices, probabilities = case_control_pilot(data.responses_at(), r_p, rng, pilot_options.p_m)
        return pilot_estimate(family, data, indices, options, pilot_probabilities=probabilities)
    indices = simple_random_pilot(data.n, r_p, rng)
    return pilot_estimate(family, data, indices, options)


def draw_pilot(
    family: GlmFamily,
    data: Dataset,
    r_p: int,
    rng: np.random.Generator,
    options: Optional[FitOptions] = None,
    pilot_options: Optional[PilotOptions] = None,
) -> PilotEstimate:
    """Step 1: draw pilot rows and fit them, redrawing on separation or a singular Phi."""
    options = options or FitOptions()
    pilot_options = pilot_options or PilotOptions()
    retrying = Retrying(
        stop=stop_after_attempt(pilot_options.attempts),
        retry=retry_if_exception_type((SeparationSuspected, PilotSingular)),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    )
    for attempt in retrying:
        with attempt:
            pilot = _draw_pilot_once(family, data, r_p, rng, options, pilot_options)
    return pilot


def build_plan(
    family: GlmFamily,
    data: Dataset,
    r_p: int,
    criterion: Criterion,
    rng: np.random.Generator,
    options: Optional[FitOptions] = None,
    pilot_options: Optional[PilotOptions] = None,
    timings: Optional[Dict[str, float]] = None,
) -> Tuple[PilotEstimate, SamplingPlan]:
    """Steps 1 and 2: pilot estimates, then full-data sampling probabilities."""
    pilot_options = pilot_options or PilotOptions()
    timings = timings if timings is not None else {}
    start = time.perf_counter()
    pilot = draw_pilot(family, data, r_p, rng, options, pilot_options)
    timings["pilot"] = time.perf_counter() - start

    start = time.perf_counter()
    plan = os_probabilities(family, data.covariates_only(), pilot, criterion)
    if pilot_options.exclude_from_draw:
        plan = plan.excluding(pilot.pilot_indices)
    timings["probabilities"] = time.perf_counter() - start
    return pilot, plan


def fit_on_draw(
    family: GlmFamily,
    data: Dataset,
    draw: SubsampleDraw,
    method: EstimatorKind,
    options: Optional[FitOptions] = None,
) -> FitResult:
    """Fit the drawn rows with unit weights or with weights 1/(n * pi*_i)."""
    subsample = data.subset(draw.indices)
    weights = None
    if EstimatorKind(method) is EstimatorKind.WEIGHTED:
        weights = 1.0 / (data.n * draw.probabilities_at_draw)
    return fit_mle(family, subsample, weights, options)


def estimate_from_draw(
    family: GlmFamily,
    data: Dataset,
    plan: SamplingPlan,
    draw: SubsampleDraw,
    method: EstimatorKind,
    options: Optional[FitOptions] = None,
    pilot: Optional[PilotEstimate] = None,
    compute_variance: bool = True,
    timings: Optional[Dict[str, float]] = None,
) -> SubsampleEstimate:
    method = EstimatorKind(method)
    options = options or FitOptions()
    if pilot is not None and family.kind is FamilyKind.LOGISTIC and options.anchor is None:
        options = options.model_copy(update={"anchor": pilot.beta_p.tolist()})
    timings = dict(timings or {})
    start = time.perf_counter()
    fit = fit_on_draw(family, data, draw, method, options)
    timings["fit"] = time.perf_counter() - start
    measured = draw.indices if pilot is None else np.concatenate([pilot.pilot_indices, draw.indices])
    estimate = SubsampleEstimate(
        beta=fit.beta,
        method=method,
        criterion=plan.criterion,
        m_hat=plan.m_hat,
        draw=draw,
        fit=fit,
        pilot=pilot,
        measured_responses=int(np.unique(measured).shape[0]),
        timings=timings,
    )
    if compute_variance and method is EstimatorKind.UNWEIGHTED:
        start = time.perf_counter()
        estimate.variance = variance_estimate(family, data, estimate, options)
        estimate.timings["variance"] = time.perf_counter() - start
    return estimate


def draw_and_fit(
    family: GlmFamily,
    data: Dataset,
    plan: SamplingPlan,
    r: int,
    rng: np.random.Generator,
    methods: Sequence[EstimatorKind],
    options: Optional[FitOptions] = None,
    pilot: Optional[PilotEstimate] = None,
    compute_variance: bool = True,
    attempts: int = 1,
    sampler: str = "alias",
    timings: Optional[Dict[str, float]] = None,
) -> Dict[EstimatorKind, SubsampleEstimate]:
    """Step 3 for every method on one shared draw, drawing again while any fit separates."""
    timings = timings if timings is not None else {}
    retrying = Retrying(
        stop=stop_after_attempt(attempts),
        retry=retry_if_exception_type(SeparationSuspected),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        reraise=True,
    )
    for attempt in retrying:
        with attempt:
            start = time.perf_counter()
            draw = sample_with_replacement(plan, r, rng, sampler)
            timings["sampling"] = time.perf_counter() - start
            estimates = {
                EstimatorKind(method): estimate_from_draw(
                    family, data, plan, draw, method, options, pilot, compute_variance, timings
                )
                for method in methods
            }
    return estimates


def _two_stage(family, data, r_p, r, criterion, rng, options, pilot_options, method, compute_variance):
    options = options or FitOptions()
    pilot_options = pilot_options or PilotOptions()
    started = time.perf_counter()
    timings: Dict[str, float] = {}
    pilot, plan = build_plan(family, data, r_p, criterion, rng, options, pilot_options, timings)

    if pilot_options.warm_start:
        options = options.model_copy(update={"init": pilot.beta_p.tolist()})
    estimates = draw_and_fit(
        family,
        data,
        plan,
        r,
        rng,
        [method],
        options,
        pilot,
        compute_variance,
        pilot_options.draw_attempts,
        timings=timings,
    )
    estimate = estimates[EstimatorKind(method)]
    log_execution(
        logger,
        "subsample_estimate",
        True,
        time.perf_counter() - started,
        family=family.name,
        method=estimate.method.value,
        criterion=criterion.label,
        r=r,
        r_p=r_p,
        iterations=estimate.fit.iterations,
    )
    return estimate


def unweighted_estimate(
    family: GlmFamily,
    data: Dataset,
    r_p: int,
    r: int,
    criterion: Criterion,
    rng: np.random.Generator,
    options: Optional[FitOptions] = None,
    pilot_options: Optional[PilotOptions] = None,
    compute_variance: bool = True,
) -> SubsampleEstimate:
    """Pilot, optimal probabilities, with-replacement draw, unit-weight MLE."""
    return _two_stage(
        family, data, r_p, r, criterion, rng, options, pilot_options, EstimatorKind.UNWEIGHTED, compute_variance
    )


def weighted_estimate(
    family: GlmFamily,
    data: Dataset,
    r_p: int,
    r: int,
    criterion: Criterion,
    rng: np.random.Generator,
    options: Optional[FitOptions] = None,
    pilot_options: Optional[PilotOptions] = None,
) -> SubsampleEstimate:
    """Same pipeline as unweighted_estimate with inverse-probability estimation weights."""
    return _two_stage(family, data, r_p, r, criterion, rng, options, pilot_options, EstimatorKind.WEIGHTED, False)


def linear_probabilities(data: Dataset, criterion: Criterion) -> SamplingPlan:
    """Covariate-only probabilities for the linear model, no pilot needed.

    A-OS uses ||(X^T X / n)^{-1} x_i||, L-OS uses ||x_i||.
    """
    gram = weighted_gram(data.x, np.ones(data.n)) / data.n
    if np.linalg.matrix_rank(gram) < data.p:
        raise SingularGram("covariate Gram matrix is singular")
    weights = optimal_weights(LinearFamily(), data.x, np.zeros(data.p), gram, criterion, SingularGram)
    return plan_from_weights(weights, criterion)


def linear_unweighted_estimate(
    data: Dataset,
    r: int,
    criterion: Criterion,
    rng: np.random.Generator,
    method: EstimatorKind = EstimatorKind.UNWEIGHTED,
    options: Optional[FitOptions] = None,
    compute_variance: bool = True,
) -> SubsampleEstimate:
    """Single-stage linear-model estimator solved by exact least squares."""
    timings: Dict[str, float] = {}
    start = time.perf_counter()
    plan = linear_probabilities(data.covariates_only(), criterion)
    timings["probabilities"] = time.perf_counter() - start

    start = time.perf_counter()
    draw = sample_with_replacement(plan, r, rng)
    timings["sampling"] = time.perf_counter() - start
    return estimate_from_draw(
        LinearFamily(), data, plan, draw, method, options, None, compute_variance, timings
    )


def variance_estimate(
    family: GlmFamily,
    data: Dataset,
    estimate: SubsampleEstimate,
    options: Optional[FitOptions] = None,
) -> VarianceEstimate:
    """V = m/r Gamma^{-1} + 1/n Gamma^{-1} Omega Gamma^{-1}, from the drawn rows only."""
    options = options or FitOptions()
    draw = estimate.draw
    r = draw.r
    m_hat = estimate.m_hat
    xs = data.x[draw.indices]
    curvature = family.b_double_prime(xs @ estimate.beta)

    gamma = m_hat / r * weighted_gram(xs, curvature)
    omega = data.n * m_hat**2 / r * weighted_gram(xs, draw.probabilities_at_draw * curvature)
    gamma_inv = inverse_spd(gamma, options.ridge_jitter, SingularGammaHat, "Gamma hat")

    v_hat = m_hat / r * gamma_inv + gamma_inv @ omega @ gamma_inv / data.n
    v_hat = 0.5 * (v_hat + v_hat.T)
    return VarianceEstimate(v_hat=v_hat, gamma_hat=gamma, omega_hat=omega, trace_v=float(np.trace(v_hat)))


def full_data_weighted_mle(
    family: GlmFamily,
    data: Dataset,
    plan: SamplingPlan,
    options: Optional[FitOptions] = None,
) -> np.ndarray:
    """Full-data MLE with estimation weights n * m_hat * pi_i (the plan's unnormalized weights)."""
    return fit_mle(family, data, plan.weights, options).beta
