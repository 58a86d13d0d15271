"""glm-subsample: run simulation campaigns, export sampling probabilities, fit subsample estimators."""

import argparse
import logging
import os
import sys
import time
from typing import List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv

from glm_subsampling.cli.io import (
    build_manifest,
    load_csv_dataset,
    write_json,
    write_probabilities_csv,
    write_report_csv,
)
from glm_subsampling.config import ExperimentConfig, parse_config
from glm_subsampling.errors import MissingResponses, SubsamplingError
from glm_subsampling.estimators import (
    EstimatorKind,
    build_plan,
    linear_probabilities,
    linear_unweighted_estimate,
    unweighted_estimate,
    weighted_estimate,
)
from glm_subsampling.glm_core import Dataset, FamilyKind, get_family
from glm_subsampling.instrumentation import log_execution
from glm_subsampling.sampling import Criterion
from glm_subsampling.simulation.experiment import run_experiment, simulate_dataset
from glm_subsampling.solver import FitOptions, fit_mle

logger = logging.getLogger("glm_subsampling.cli")

LOG_LEVEL_ENV = "GLM_SUBSAMPLING_LOG_LEVEL"
THREADS_ENV = "GLM_SUBSAMPLING_THREADS"


def load_dataset(config: ExperimentConfig, responses_on_demand: bool = False) -> Tuple[Dataset, Optional[np.ndarray]]:
    """The configured CSV, or one simulated full dataset with its true coefficients."""
    if config.uses_csv:
        data = load_csv_dataset(
            config.data.csv_path,
            config.data.response_column,
            standardize=config.data.standardize,
            add_intercept=config.add_intercept,
            allow_missing_response=responses_on_demand or config.data.responses_on_demand,
        )
        data.check_support(get_family(config.family_kind))
        return data, None
    return simulate_dataset(config, config.experiment.seed)


def _criterion(config: ExperimentConfig, override: Optional[str]) -> Criterion:
    return Criterion.parse(override) if override else config.criteria[0]


def cmd_simulate(config: ExperimentConfig, threads: Optional[int] = None) -> int:
    report = run_experiment(config, threads=threads)
    report_path = write_report_csv(report.rows(), config.output_path("report", ".csv"))
    stats = {"repetitions": report.stats.usage_count, "succeeded": report.stats.success_count,
             "failed": report.stats.error_count}
    timings = {"wall_time": report.wall_time, "average_repetition": report.stats.average_wall_time}
    manifest = build_manifest(
        "simulate",
        config,
        report.base_seed,
        timings,
        mode=report.mode.value,
        report=str(report_path),
        reference=report.reference,
        stats=stats,
        dropped_cells=report.dropped,
        failures=report.failures,
    )
    manifest_path = write_json(manifest, config.output_path("manifest", ".json"))
    print(f"report: {report_path}")
    print(f"manifest: {manifest_path}")
    return 0


def _write_rows_to_measure(config: ExperimentConfig, seed: int, criterion: Criterion, n: int, rows: List[int]):
    """Manifest listing the pilot rows whose responses must be measured before a rerun."""
    manifest = build_manifest(
        "probabilities",
        config,
        seed,
        criterion=criterion.label,
        n=n,
        status="responses_needed",
        pilot_rows=rows,
    )
    path = write_json(manifest, config.output_path("manifest", ".json"))
    print(f"measure the responses of the {len(rows)} rows listed under pilot_rows in {path}, then rerun",
          file=sys.stderr)


def cmd_probabilities(
    config: ExperimentConfig,
    criterion: Optional[str] = None,
    responses_on_demand: bool = False,
) -> int:
    """Export full-data sampling probabilities; only pilot rows need measured responses."""
    started = time.perf_counter()
    data, _ = load_dataset(config, responses_on_demand)
    family = get_family(config.family_kind)
    chosen = _criterion(config, criterion)
    seed = config.experiment.seed

    pilot_rows: List[int] = []
    if family.kind is FamilyKind.LINEAR:
        plan = linear_probabilities(data.covariates_only(), chosen)
    else:
        rng = np.random.default_rng([seed, 1])
        try:
            pilot, plan = build_plan(
                family, data, config.sampling.r_p, chosen, rng, FitOptions(), config.pilot_options()
            )
        except MissingResponses as exc:
            if exc.rows:
                _write_rows_to_measure(config, seed, chosen, data.n, exc.rows)
            raise
        pilot_rows = sorted(int(i) for i in np.unique(pilot.pilot_indices))

    path = write_probabilities_csv(plan, config.output_path("probabilities", ".csv"))
    elapsed = time.perf_counter() - started
    manifest = build_manifest(
        "probabilities",
        config,
        seed,
        {"wall_time": elapsed},
        criterion=chosen.label,
        m_hat=plan.m_hat,
        n=plan.n,
        pilot_rows=pilot_rows,
        probabilities=str(path),
    )
    write_json(manifest, config.output_path("manifest", ".json"))
    log_execution(logger, "probabilities", True, elapsed, criterion=chosen.label, n=plan.n)
    print(f"probabilities: {path}")
    return 0


def cmd_fit(
    config: ExperimentConfig,
    method: str = "unweighted",
    criterion: Optional[str] = None,
    r: Optional[int] = None,
    r_p: Optional[int] = None,
    seed: Optional[int] = None,
    full_fit: bool = False,
    responses_on_demand: bool = False,
) -> int:
    """Fit one subsample estimator and write its coefficients and diagnostics."""
    started = time.perf_counter()
    data, beta0 = load_dataset(config, responses_on_demand)
    family = get_family(config.family_kind)
    chosen = _criterion(config, criterion)
    method = EstimatorKind(method)
    r = r or config.sampling.r_grid[0]
    r_p = r_p or config.sampling.r_p
    seed = config.experiment.seed if seed is None else seed
    rng = np.random.default_rng([seed, 1])
    variance = config.sampling.compute_variance

    if family.kind is FamilyKind.LINEAR:
        estimate = linear_unweighted_estimate(data, r, chosen, rng, method, compute_variance=variance)
    elif method is EstimatorKind.UNWEIGHTED:
        estimate = unweighted_estimate(
            family, data, r_p, r, chosen, rng, pilot_options=config.pilot_options(), compute_variance=variance
        )
    else:
        estimate = weighted_estimate(family, data, r_p, r, chosen, rng, pilot_options=config.pilot_options())

    payload = {
        "beta": estimate.beta,
        "feature_names": data.feature_names,
        "method": estimate.method.value,
        "criterion": chosen.label,
        "r": r,
        "r_p": estimate.pilot.r_p if estimate.pilot is not None else 0,
        "m_hat": estimate.m_hat,
        "iterations": estimate.fit.iterations,
        "converged": estimate.fit.converged,
        "measured_responses": estimate.measured_responses,
    }
    if estimate.variance is not None:
        payload["trace_v"] = estimate.variance.trace_v
        payload["standard_errors"] = estimate.variance.standard_errors()
        payload["confidence_intervals"] = estimate.variance.confidence_intervals(estimate.beta)
    if beta0 is not None:
        payload["beta0"] = beta0
        payload["error_norm_to_beta0"] = float(np.linalg.norm(estimate.beta - beta0))
    if full_fit:
        full = fit_mle(family, data).beta
        payload["beta_full_mle"] = full
        payload["error_norm_to_full_mle"] = float(np.linalg.norm(estimate.beta - full))

    elapsed = time.perf_counter() - started
    manifest = build_manifest("fit", config, seed, dict(estimate.timings, wall_time=elapsed), estimate=payload)
    path = write_json(manifest, config.output_path("estimate", ".json"))
    log_execution(logger, "fit", True, elapsed, method=method.value, criterion=chosen.label, r=r)
    print(f"estimate: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glm-subsample", description=__doc__)
    parser.add_argument("--log-level", default=None, help="logging level (default from $%s or WARNING)" % LOG_LEVEL_ENV)
    parser.add_argument("--threads", type=int, default=None, help="cap on the repetition thread pool")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="run a simulation campaign and write a report")
    simulate.add_argument("config")

    probabilities = commands.add_parser("probabilities", help="export optimal sampling probabilities")
    probabilities.add_argument("config")
    probabilities.add_argument("--criterion", choices=["aopt", "lopt"], default=None)
    probabilities.add_argument("--responses-on-demand", action="store_true",
                               help="allow NA responses outside the rows actually measured")

    fit = commands.add_parser("fit", help="fit a subsample estimator on one dataset")
    fit.add_argument("config")
    fit.add_argument("--method", choices=[kind.value for kind in EstimatorKind], default="unweighted")
    fit.add_argument("--criterion", choices=["aopt", "lopt"], default=None)
    fit.add_argument("--r", type=int, default=None, help="second-stage subsample size")
    fit.add_argument("--r-p", type=int, default=None, help="pilot size")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--full-fit", action="store_true", help="also fit the full data and report the distance")
    fit.add_argument("--responses-on-demand", action="store_true",
                     help="allow NA responses outside the rows actually measured")
    return parser


def _configure_logging(level: Optional[str]):
    level = (level or os.getenv(LOG_LEVEL_ENV) or "WARNING").upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    threads = args.threads or (int(os.environ[THREADS_ENV]) if os.getenv(THREADS_ENV) else None)
    started = time.perf_counter()

    try:
        config = parse_config(args.config)
        if args.command == "simulate":
            return cmd_simulate(config, threads)
        if args.command == "probabilities":
            return cmd_probabilities(config, args.criterion, args.responses_on_demand)
        return cmd_fit(
            config,
            method=args.method,
            criterion=args.criterion,
            r=args.r,
            r_p=args.r_p,
            seed=args.seed,
            full_fit=args.full_fit,
            responses_on_demand=args.responses_on_demand,
        )
    except SubsamplingError as exc:
        log_execution(logger, args.command, False, time.perf_counter() - started, error=str(exc),
                      error_type=exc.error_type, exit_code=exc.exit_code)
        print(str(exc), file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        log_execution(logger, args.command, False, time.perf_counter() - started, error=str(exc), exit_code=2)
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
