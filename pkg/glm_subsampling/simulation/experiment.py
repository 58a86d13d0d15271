"""Repeated-sampling campaigns comparing the unweighted and weighted estimators.

Each repetition s uses seed = base_seed + s. The full data is drawn from
``default_rng([seed, 0])`` and the (criterion, r) cell with indices (ci, ri)
draws its pilot and subsample from ``default_rng([seed, 1, ci, ri])``, so the
report does not depend on how repetitions are scheduled across threads.
Both methods are fitted on the same pilot and the same draw.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from glm_subsampling.config import ExperimentConfig, ExperimentMode, size_violations
from glm_subsampling.errors import SubsamplingError, ValidationError
from glm_subsampling.estimators import EstimatorKind, build_plan, draw_and_fit, linear_probabilities
from glm_subsampling.glm_core import Dataset, FamilyKind, GlmFamily, get_family
from glm_subsampling.instrumentation import RunStats, log_execution
from glm_subsampling.simulation.designs import generate_design, generate_response, resolve_beta0
from glm_subsampling.simulation.metrics import emse, empirical_variance, relative_efficiency
from glm_subsampling.solver import FitOptions, fit_mle

logger = logging.getLogger(__name__)

# a cell is reported only while failures stay within this share of repetitions
MAX_FAILURE_SHARE = 0.01


class CellOutcome(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    beta: Optional[np.ndarray] = None
    iterations: int = 0
    trace_v: Optional[float] = None
    wall_time: float = 0.0
    error: Optional[str] = None

    @property
    def success(self) -> bool:
        return self.error is None


def cell_key(ci: int, ri: int, method: EstimatorKind) -> str:
    return f"{ci}/{ri}/{EstimatorKind(method).value}"


class RepetitionResult(BaseModel):
    repetition: int
    seed: int
    wall_time: float
    outcomes: Dict[str, CellOutcome] = Field(default_factory=dict)


class ReportCell(BaseModel):
    setting: str
    family: str
    criterion: str
    method: str
    r: int
    r_p: int
    S: int
    emse: float
    emp_var: float
    mean_trace_vhat: Optional[float] = None
    rel_eff: Optional[float] = None
    mean_iters: float
    wall_ms: Optional[float] = None
    seed: int
    failures: int = 0


class ExperimentReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ExperimentConfig
    mode: ExperimentMode
    base_seed: int
    repetitions: int
    cells: List[ReportCell] = Field(default_factory=list)
    dropped: List[Dict] = Field(default_factory=list)
    failures: List[Dict] = Field(default_factory=list)
    stats: RunStats = Field(default_factory=RunStats)
    reference: Optional[List[float]] = None
    wall_time: Optional[float] = None

    def rows(self) -> List[Dict]:
        return [cell.model_dump(exclude={"failures"}) for cell in self.cells]

    def cell(self, criterion: str, method: str, r: int) -> ReportCell:
        for cell in self.cells:
            if cell.criterion == criterion and cell.method == method and cell.r == r:
                return cell
        raise KeyError(f"no report cell for {criterion}/{method}/r={r}")


def simulate_dataset(config: ExperimentConfig, seed: int) -> Tuple[Dataset, np.ndarray]:
    """Full data for one repetition and the true coefficients that generated it."""
    spec = config.design_spec
    rng = np.random.default_rng([seed, 0])
    raw = generate_design(spec, config.data.n, rng)
    data = Dataset.from_arrays(raw, add_intercept=config.add_intercept)
    beta0 = resolve_beta0(config.data.beta0, config.family_kind, data.p)
    y = generate_response(config.family_kind, data.x, beta0, rng, config.data.noise_sd)
    return data.model_copy(update={"y": y}), beta0


def _fit_options(config: ExperimentConfig, beta_p=None) -> FitOptions:
    if beta_p is not None and config.sampling.warm_start:
        return FitOptions(init=list(beta_p))
    return FitOptions()


def _run_cell(
    config: ExperimentConfig,
    family: GlmFamily,
    data: Dataset,
    criterion,
    r: int,
    rng: np.random.Generator,
) -> Dict[EstimatorKind, CellOutcome]:
    sampling = config.sampling
    pilot_options = config.pilot_options()
    start = time.perf_counter()
    try:
        if family.kind is FamilyKind.LINEAR:
            pilot = None
            plan = linear_probabilities(data.covariates_only(), criterion)
        else:
            pilot, plan = build_plan(family, data, sampling.r_p, criterion, rng, FitOptions(), pilot_options)
        estimates = draw_and_fit(
            family,
            data,
            plan,
            r,
            rng,
            sampling.methods,
            _fit_options(config, pilot.beta_p if pilot is not None else None),
            pilot,
            sampling.compute_variance,
            pilot_options.draw_attempts,
            sampling.sampler,
        )
    except SubsamplingError as exc:
        return {method: CellOutcome(error=str(exc)) for method in sampling.methods}
    shared = time.perf_counter() - start - sum(
        estimate.timings.get("fit", 0.0) + estimate.timings.get("variance", 0.0) for estimate in estimates.values()
    )

    return {
        method: CellOutcome(
            beta=estimate.beta,
            iterations=estimate.fit.iterations,
            trace_v=estimate.variance.trace_v if estimate.variance is not None else None,
            wall_time=shared + estimate.timings.get("fit", 0.0) + estimate.timings.get("variance", 0.0),
        )
        for method, estimate in estimates.items()
    }


def run_repetition(
    config: ExperimentConfig,
    repetition: int,
    base_seed: int,
    fixed: Optional[Tuple[Dataset, np.ndarray]] = None,
) -> Tuple[RepetitionResult, np.ndarray]:
    """One repetition over every (criterion, r, method) cell; returns the result and its reference beta."""
    seed = base_seed + repetition
    start = time.perf_counter()
    family = get_family(config.family_kind)
    data, reference = fixed if fixed is not None else simulate_dataset(config, seed)

    result = RepetitionResult(repetition=repetition, seed=seed, wall_time=0.0)
    for ci, criterion in enumerate(config.criteria):
        for ri, r in enumerate(config.sampling.r_grid):
            rng = np.random.default_rng([seed, 1, ci, ri])
            for method, outcome in _run_cell(config, family, data, criterion, r, rng).items():
                result.outcomes[cell_key(ci, ri, method)] = outcome
    result.wall_time = time.perf_counter() - start
    return result, reference


def _fixed_data(config: ExperimentConfig, base_seed: int, dataset: Optional[Dataset]):
    if config.uses_csv:
        if dataset is None:
            from glm_subsampling.cli.io import load_csv_dataset

            dataset = load_csv_dataset(
                config.data.csv_path,
                config.data.response_column,
                standardize=config.data.standardize,
                add_intercept=config.add_intercept,
            )
        violations = [
            f"sampling.r_grid: subsample size {r} exceeds n={dataset.n}" for r in config.sampling.r_grid if r > dataset.n
        ]
        if config.sampling.r_p > dataset.n:
            violations.append(f"sampling.r_p: pilot size {config.sampling.r_p} exceeds n={dataset.n}")
        violations.extend(
            size_violations(config.sampling, dataset.p, config.family_kind is not FamilyKind.LINEAR)
        )
        if violations:
            raise ValidationError(violations)
        family = get_family(config.family_kind)
        dataset.check_support(family)
        reference = fit_mle(family, dataset).raise_if_not_converged().beta
        return dataset, reference
    if config.mode is ExperimentMode.CONDITIONAL:
        return simulate_dataset(config, base_seed)
    return None


def _aggregate(config: ExperimentConfig, report: ExperimentReport, results, references):
    sampling = config.sampling
    record_timings = config.experiment.record_timings
    r_p = 0 if config.family_kind is FamilyKind.LINEAR else sampling.r_p
    by_key: Dict[Tuple[int, int], Dict[EstimatorKind, ReportCell]] = {}

    for ci, criterion in enumerate(config.criteria):
        for ri, r in enumerate(sampling.r_grid):
            for method in sampling.methods:
                betas, refs, iterations, traces, walls = [], [], [], [], []
                failures = 0
                for result, reference in zip(results, references):
                    outcome = result.outcomes[cell_key(ci, ri, method)]
                    if not outcome.success:
                        failures += 1
                        report.failures.append(
                            {
                                "repetition": result.repetition,
                                "seed": result.seed,
                                "criterion": criterion.label,
                                "method": method.value,
                                "r": r,
                                "error": outcome.error,
                            }
                        )
                        continue
                    betas.append(outcome.beta)
                    refs.append(reference)
                    iterations.append(outcome.iterations)
                    walls.append(outcome.wall_time)
                    if outcome.trace_v is not None:
                        traces.append(outcome.trace_v)

                if not betas or failures > MAX_FAILURE_SHARE * config.experiment.repetitions:
                    logger.warning(
                        "dropping cell %s/%s/r=%d: %d of %d repetitions failed",
                        criterion.label, method.value, r, failures, config.experiment.repetitions,
                    )
                    report.dropped.append(
                        {"criterion": criterion.label, "method": method.value, "r": r, "failures": failures}
                    )
                    continue

                errors = [beta - ref for beta, ref in zip(betas, refs)]
                cell = ReportCell(
                    setting=config.setting,
                    family=config.family_kind.value,
                    criterion=criterion.label,
                    method=method.value,
                    r=r,
                    r_p=r_p,
                    S=len(betas),
                    emse=emse(errors, np.zeros_like(errors[0]), sampling.trim_alpha),
                    emp_var=empirical_variance(betas),
                    mean_trace_vhat=float(np.mean(traces)) if traces else None,
                    mean_iters=float(np.mean(iterations)),
                    wall_ms=1000.0 * float(np.mean(walls)) if record_timings else None,
                    seed=report.base_seed,
                    failures=failures,
                )
                report.cells.append(cell)
                by_key.setdefault((ci, ri), {})[method] = cell

    for pair in by_key.values():
        weighted = pair.get(EstimatorKind.WEIGHTED)
        unweighted = pair.get(EstimatorKind.UNWEIGHTED)
        if weighted is None or unweighted is None:
            continue
        try:
            value = relative_efficiency(weighted.emse, unweighted.emse)
        except SubsamplingError:
            continue
        weighted.rel_eff = value
        unweighted.rel_eff = value


def run_experiment(
    config: ExperimentConfig,
    base_seed: Optional[int] = None,
    threads: Optional[int] = None,
    dataset: Optional[Dataset] = None,
) -> ExperimentReport:
    """Run every repetition, then reduce them into one report cell per (criterion, r, method)."""
    base_seed = config.experiment.seed if base_seed is None else base_seed
    threads = threads or config.experiment.threads
    repetitions = config.experiment.repetitions
    started = time.perf_counter()

    fixed = _fixed_data(config, base_seed, dataset)
    report = ExperimentReport(
        config=config,
        mode=config.mode,
        base_seed=base_seed,
        repetitions=repetitions,
        reference=None if fixed is None else [float(value) for value in fixed[1]],
    )

    with ThreadPoolExecutor(max_workers=threads) as executor:
        pairs = list(
            executor.map(lambda s: run_repetition(config, s, base_seed, fixed), range(1, repetitions + 1))
        )
    results = [result for result, _ in pairs]
    references = [reference for _, reference in pairs]

    for result in results:
        report.stats.record(all(outcome.success for outcome in result.outcomes.values()), result.wall_time)
    _aggregate(config, report, results, references)

    elapsed = time.perf_counter() - started
    if config.experiment.record_timings:
        report.wall_time = elapsed
    log_execution(
        logger,
        "experiment",
        True,
        elapsed,
        setting=config.setting,
        mode=config.mode.value,
        repetitions=repetitions,
        cells=len(report.cells),
        dropped=len(report.dropped),
        failed_repetitions=report.stats.error_count,
    )
    return report
