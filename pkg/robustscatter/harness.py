"""
Monte Carlo experiments: configuration, orchestration and reports.

Each (N, n) pair and trial runs on its own random stream
trial_rng(seed, dim_index * trials + trial), so a batch gives the same rows
whatever the number of worker threads. Rows are merged in (dims, trial)
order.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable, Mapping, Union

import numpy as np
from scipy import linalg

from robustscatter import datagen, doa, estimator, rmt
from robustscatter.errors import ConfigError, DomainError, NonConvergenceError, RobustScatterError
from robustscatter.scatterSettings import (
    ArrayScenario,
    CovarianceModel,
    EntryDistribution,
    EntryKind,
    ExperimentConfig,
    ExperimentKind,
    ExperimentReport,
    ReportFormat,
    ReportRow,
    SpectrumKind,
)
from robustscatter.weights import maronna_condition, weight_from_config, weight_to_config

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["experiment", "N", "n", "trial", "metric_name", "value"]
THREADS_ENV = "ROBUSTSCATTER_THREADS"

Metrics = list[tuple[str, float]]


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        logger.warning("Ignoring invalid %s=%r", THREADS_ENV, os.environ[THREADS_ENV])
        return 1


def dims_key(metric_name: str, N: int, n: int) -> str:
    return f"{metric_name}@{N}x{n}"


# Configuration

_SIMPLE_FIELDS = {f.name: f.default for f in fields(ExperimentConfig) if f.name not in
                  ("experiment", "dims", "model", "dist", "weight", "noise")}


def config_from_dict(d: Mapping[str, Any]) -> ExperimentConfig:
    """Build a config from its JSON form, reporting every problem at once."""

    problems = []
    known = {"experiment", "dims", "model", "dist", "weight", "noise"} | set(_SIMPLE_FIELDS)
    for key in sorted(set(d) - known):
        problems.append(f"Unknown config key {key!r}")

    experiment = None
    try:
        experiment = ExperimentKind(d.get("experiment"))
    except ValueError:
        choices = ", ".join(e.value for e in ExperimentKind)
        problems.append(f"experiment must be one of {choices}, got {d.get('experiment')!r}")

    dims = []
    raw_dims = d.get("dims")
    if not isinstance(raw_dims, list) or not raw_dims:
        problems.append("dims must be a nonempty list of [N, n] pairs")
    else:
        for pair in raw_dims:
            if (not isinstance(pair, (list, tuple)) or len(pair) != 2
                    or not all(isinstance(v, int) for v in pair)):
                problems.append(f"dims entry {pair!r} is not an [N, n] pair of integers")
            elif not 0 < pair[0] < pair[1]:
                problems.append(f"dims entry {list(pair)} must satisfy 0 < N < n")
            else:
                dims.append((pair[0], pair[1]))

    def build(what: str, factory: Callable[..., Any], raw: Any):
        if not isinstance(raw, Mapping):
            problems.append(f"{what} must be an object, got {raw!r}")
            return None
        try:
            return factory(**raw)
        except (TypeError, ValueError) as e:
            problems.append(f"{what}: {e}")
            return None

    model = build("model", CovarianceModel, d.get("model", {"kind": "identity"}))
    dist = build("dist", EntryDistribution, d.get("dist", {"kind": "gaussian_complex"}))
    noise = build("noise", EntryDistribution, d["noise"]) if d.get("noise") is not None else None

    weight = None
    try:
        weight = weight_from_config(d.get("weight", {"family": "student_t", "t": 1.0}))
    except ConfigError as e:
        problems.extend(e.problems)
    except AttributeError:
        problems.append(f"weight must be an object or a family:param string, got {d.get('weight')!r}")

    simple = {k: d.get(k, default) for k, default in _SIMPLE_FIELDS.items()}
    if not isinstance(simple["trials"], int) or simple["trials"] < 1:
        problems.append(f"trials must be a positive integer, got {simple['trials']!r}")
    if not isinstance(simple["seed"], int) or simple["seed"] < 0:
        problems.append(f"seed must be a nonnegative integer, got {simple['seed']!r}")
    if not isinstance(simple["max_iter"], int) or simple["max_iter"] < 1:
        problems.append(f"max_iter must be a positive integer, got {simple['max_iter']!r}")
    for key in ("tol", "grid_deg", "sigma2", "support_margin"):
        if not isinstance(simple[key], (int, float)) or not simple[key] > 0:
            problems.append(f"{key} must be positive, got {simple[key]!r}")
    if isinstance(simple["grid_deg"], (int, float)) and simple["grid_deg"] > doa.MAX_GRID_STEP_DEG:
        problems.append(f"grid_deg must not exceed {doa.MAX_GRID_STEP_DEG}, got {simple['grid_deg']}")
    if not isinstance(simple["z"], (int, float)) or not simple["z"] < 0:
        problems.append(f"z must be negative, got {simple['z']!r}")
    try:
        simple["angles_deg"] = tuple(float(a) for a in simple["angles_deg"])
        simple["powers"] = tuple(float(p) for p in simple["powers"])
        if len(simple["angles_deg"]) != len(simple["powers"]):
            problems.append("angles_deg and powers must have the same length")
    except (TypeError, ValueError):
        problems.append("angles_deg and powers must be lists of numbers")

    if problems:
        raise ConfigError(problems)

    return ExperimentConfig(
        experiment=experiment, dims=dims, model=model, dist=dist, weight=weight, noise=noise, **simple
    )


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        with open(path) as f:
            d = json.load(f)
    except FileNotFoundError:
        raise ConfigError([f"Config file {path} not found"])
    except json.JSONDecodeError as e:
        raise ConfigError([f"Config file {path} is not valid JSON: {e}"])

    if not isinstance(d, dict):
        raise ConfigError([f"Config file {path} must hold a JSON object"])
    return config_from_dict(d)


def _distribution_to_dict(dist: EntryDistribution) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": dist.kind.value, "eta": dist.eta}
    if dist.dof is not None:
        out["dof"] = dist.dof
    return out


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """JSON form of a config; config_from_dict(config_to_dict(cfg)) == cfg."""

    out: dict[str, Any] = {
        "experiment": cfg.experiment.value,
        "dims": [[N, n] for N, n in cfg.dims],
        "model": {"kind": cfg.model.kind.value, "scale": cfg.model.scale, "rho": cfg.model.rho,
                  "spikes": list(cfg.model.spikes)},
        "dist": _distribution_to_dict(cfg.dist),
        "weight": weight_to_config(cfg.weight),
        "noise": None if cfg.noise is None else _distribution_to_dict(cfg.noise),
    }
    for key in _SIMPLE_FIELDS:
        value = getattr(cfg, key)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


# Experiments

def _samples(cfg: ExperimentConfig, N: int, n: int, rng: np.random.Generator):
    return datagen.generate_samples(cfg.model, cfg.dist, N, None, n, rng)


def _theorem1_gap(cfg: ExperimentConfig, N: int, n: int, rng: np.random.Generator) -> Metrics:
    S = _samples(cfg, N, n, rng)
    estimate = estimator.robust_fixed_point(S, cfg.weight, cfg.tol, cfg.max_iter)
    report = rmt.spectrum_report(S, estimate)
    return [
        ("norm_gap", report.norm_gap),
        ("spacing_max", report.spacing_max),
        ("iterations", estimate.iterations),
    ]


def _spacing(cfg: ExperimentConfig, N: int, n: int, rng: np.random.Generator) -> Metrics:
    S = _samples(cfg, N, n, rng)
    estimate = estimator.robust_fixed_point(S, cfg.weight, cfg.tol, cfg.max_iter)
    S_hat = estimator.sample_covariance(S)

    norm_gap = rmt.spectral_norm_gap(estimator.scaled_estimate(estimate, cfg.weight), S_hat)
    spacing_max, _ = rmt.eigenvalue_spacing(estimate.matrix, S_hat, estimate.scale_reference)
    weyl_ok = spacing_max <= norm_gap + rmt.EIGEN_SLACK * max(1.0, norm_gap)
    return [("spacing_max", spacing_max), ("norm_gap", norm_gap), ("weyl_ok", float(weyl_ok))]


def _concentration(cfg: ExperimentConfig, N: int, n: int, rng: np.random.Generator) -> Metrics:
    concentration_max, _ = rmt.quadratic_concentration(_samples(cfg, N, n, rng))
    return [("concentration_max", concentration_max)]


def _en_validation(cfg: ExperimentConfig, N: int, n: int, rng: np.random.Generator) -> Metrics:
    S = _samples(cfg, N, n, rng)
    C = datagen.population_covariance(cfg.model, N)
    equivalent = rmt.solve_eN(cfg.z, N / n, linalg.eigvalsh(C))
    trace = rmt.resolvent_trace(estimator.sample_covariance(S), C, cfg.z)
    return [
        ("e", equivalent.e),
        ("en_residual", equivalent.residual),
        ("en_iterations", equivalent.iterations),
        ("resolvent_trace", trace),
        ("en_gap", abs(trace - equivalent.e)),
    ]


def _gaussian_matrix(shape: tuple[int, ...], complex_entries: bool, rng: np.random.Generator) -> np.ndarray:
    kind = EntryKind.GAUSSIAN_COMPLEX if complex_entries else EntryKind.GAUSSIAN_REAL
    return datagen.draw_entries(EntryDistribution(kind), shape, rng)


def _lemma_checks(cfg: ExperimentConfig, N: int, n: int, rng: np.random.Generator) -> Metrics:
    complex_entries = cfg.dist.is_complex

    G = _gaussian_matrix((N, N), complex_entries, rng)
    A = G @ G.conj().T / N + np.eye(N)
    x = _gaussian_matrix((N,), complex_entries, rng)
    mil = rmt.mil_check(A, x, rng.uniform(0.1, 2.0))

    H = _gaussian_matrix((N, N), complex_entries, rng)
    v = _gaussian_matrix((N,), complex_entries, rng)
    gap, bound = rmt.rank_one_perturbation_gap((H + H.conj().T) / 2, A - np.eye(N), v, rng.uniform(0.1, 2.0))

    S = _samples(cfg, N, n, rng)
    interlacing = rmt.leave_one_out_interlacing(S, int(rng.integers(n)))
    probe = rmt.trace_concentration_probe(np.eye(N) / N, cfg.dist, n, rng)

    return [
        ("mil_residual", mil),
        ("rank_one_ratio", gap / bound),
        ("interlacing_ok", float(interlacing.passed)),
        ("trace_mean", probe.mean),
        ("trace_variance", probe.variance),
    ]


def _support_diagnostic(cfg: ExperimentConfig, N: int, n: int, rng: np.random.Generator) -> Metrics:
    S = _samples(cfg, N, n, rng)
    c = N / n
    c_minus, c_plus = datagen.model_bounds(cfg.model, N)
    lower, _ = rmt.mp_edges(c, c_minus)
    _, upper = rmt.mp_edges(c, c_plus)

    eig = linalg.eigvalsh(estimator.sample_covariance(S))
    inside = eig[0] >= lower - cfg.support_margin and eig[-1] <= upper + cfg.support_margin
    return [
        ("inside", float(inside)),
        ("min_eig", eig[0]),
        ("max_eig", eig[-1]),
        ("min_loo_lambda", rmt.min_leave_one_out_eigenvalue(S)),
    ]


def angle_grid(step_deg: float) -> np.ndarray:
    """Grid over [-90, 90] degrees, in radians."""
    return np.deg2rad(np.linspace(-90.0, 90.0, int(round(180.0 / step_deg)) + 1))


def _doa_compare(cfg: ExperimentConfig, N: int, n: int, rng: np.random.Generator) -> Metrics:
    scn = ArrayScenario.from_degrees(N, cfg.angles_deg, cfg.powers, cfg.sigma2)
    noise = cfg.dist if cfg.noise is None else cfg.noise
    S, _ = datagen.generate_snapshots(scn, n, EntryDistribution(EntryKind.GAUSSIAN_COMPLEX), noise, rng)
    grid = angle_grid(cfg.grid_deg)
    K = scn.K

    S_hat = estimator.sample_covariance(S)
    estimate = estimator.robust_fixed_point(S, cfg.weight, cfg.tol, cfg.max_iter)

    music = doa.music_spectrum(S_hat, K, grid)
    gmusic = doa.gmusic_spectrum(S_hat, n, K, grid)
    robust = doa.gmusic_spectrum(estimate.matrix, n, K, grid, kind=SpectrumKind.ROBUST_GMUSIC)

    return [
        ("mse_music", doa.angle_mse(doa.estimate_angles(music, K), scn.theta)),
        ("mse_gmusic", doa.angle_mse(doa.estimate_angles(gmusic, K), scn.theta)),
        ("mse_robust", doa.angle_mse(doa.estimate_angles(robust, K), scn.theta)),
        ("spectrum_gap", float(np.max(np.abs(robust.values - gmusic.values)))),
    ]


def _existence_iterations(cfg: ExperimentConfig, N: int, n: int, rng: np.random.Generator) -> Metrics:
    S = _samples(cfg, N, n, rng)
    feasible = estimator.is_feasible(S, cfg.weight, estimator.feasible_start(S, cfg.weight))
    condition = maronna_condition(cfg.weight, N, n)

    metrics: Metrics = [("maronna_condition", float(condition)), ("feasible", float(feasible))]
    try:
        estimate = estimator.robust_fixed_point(S, cfg.weight, cfg.tol, cfg.max_iter)
    except NonConvergenceError as e:
        logger.info("N=%d, n=%d did not converge: %s", N, n, e)
        return [("iterations", e.iterations), ("converged", 0.0), *metrics, ("stop_residual", e.residual)]

    return [
        ("iterations", estimate.iterations),
        ("converged", 1.0),
        *metrics,
        ("stop_residual", estimate.residual),
        ("fixed_point_residual", estimate.fixed_point_residual),
    ]


EXPERIMENTS: dict[ExperimentKind, Callable[[ExperimentConfig, int, int, np.random.Generator], Metrics]] = {
    ExperimentKind.THEOREM1_GAP: _theorem1_gap,
    ExperimentKind.SPACING: _spacing,
    ExperimentKind.CONCENTRATION: _concentration,
    ExperimentKind.EN_VALIDATION: _en_validation,
    ExperimentKind.LEMMA_CHECKS: _lemma_checks,
    ExperimentKind.SUPPORT_DIAGNOSTIC: _support_diagnostic,
    ExperimentKind.DOA_COMPARE: _doa_compare,
    ExperimentKind.EXISTENCE_ITERATIONS: _existence_iterations,
}


# Orchestration

def _run_trial(cfg: ExperimentConfig, task: tuple[int, int, int, int]) -> list[ReportRow]:
    dim_index, N, n, trial = task
    rng = datagen.trial_rng(cfg.seed, dim_index * cfg.trials + trial)

    try:
        metrics = EXPERIMENTS[cfg.experiment](cfg, N, n, rng)
        if not all(np.isfinite(value) for _, value in metrics):
            raise DomainError("experiment produced a non finite metric")
    except (RobustScatterError, linalg.LinAlgError) as e:
        logger.warning("%s N=%d n=%d trial %d failed: %s", cfg.experiment.value, N, n, trial, e)
        metrics = [("error", 1.0)]

    return [ReportRow(cfg.experiment.value, N, n, trial, name, float(value)) for name, value in metrics]


def aggregate(rows: list[ReportRow]) -> dict[str, tuple[float, float, float]]:
    """(median, p05, p95) of every metric per (N, n) pair."""

    groups: dict[str, list[float]] = {}
    for row in rows:
        groups.setdefault(dims_key(row.metric_name, row.N, row.n), []).append(row.value)

    return {
        key: tuple(float(v) for v in np.percentile(values, [50, 5, 95]))  # type: ignore[misc]
        for key, values in groups.items()
    }


def _summarize(cfg: ExperimentConfig, report: ExperimentReport) -> dict[str, float]:
    summary: dict[str, float] = {}

    for N, n in cfg.dims:
        if cfg.experiment == ExperimentKind.DOA_COMPARE:
            robust = report.values("mse_robust", N, n)
            plain = report.values("mse_gmusic", N, n)
            wins, losses = int(np.sum(robust < plain)), int(np.sum(robust > plain))
            summary[dims_key("robust_wins", N, n)] = float(wins)
            summary[dims_key("robust_losses", N, n)] = float(losses)
            if wins + losses:
                summary[dims_key("sign_test_p", N, n)] = doa.sign_test(wins, wins + losses)
                # small when the robust estimate loses significantly often
                summary[dims_key("noninferiority_p", N, n)] = doa.sign_test(losses, wins + losses)

        elif cfg.experiment == ExperimentKind.SUPPORT_DIAGNOSTIC:
            inside = report.values("inside", N, n)
            if inside.size:
                summary[dims_key("pass_fraction", N, n)] = float(np.mean(inside))

        summary[dims_key("errors", N, n)] = float(report.values("error", N, n).size)

    return summary


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    tasks = [(i, N, n, trial) for i, (N, n) in enumerate(cfg.dims) for trial in range(cfg.trials)]
    logger.info("running %s: %d trials over %d dimension pairs on %d threads",
                cfg.experiment.value, cfg.trials, len(cfg.dims), threads)

    start = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda task: _run_trial(cfg, task), tasks))
    else:
        results = [_run_trial(cfg, task) for task in tasks]

    report = ExperimentReport(rows=[row for rows in results for row in rows], config_echo=config_to_dict(cfg))
    report.aggregates = aggregate(report.rows)
    report.summary = _summarize(cfg, report)
    report.runtime_seconds = time.perf_counter() - start

    logger.info("%s finished in %.2f s", cfg.experiment.value, report.runtime_seconds)
    return report


# Reports

def emit_report(r: ExperimentReport, path: Union[str, Path], fmt: Union[ReportFormat, str] = ReportFormat.CSV) -> None:
    """Write rows as CSV, or rows with aggregates, summary and config as JSON."""

    fmt = ReportFormat(fmt)
    with open(path, "w", newline="") as f:
        if fmt == ReportFormat.CSV:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for row in r.rows:
                writer.writerow([row.experiment, row.N, row.n, row.trial, row.metric_name, repr(row.value)])
        else:
            document = {
                "rows": [dict(zip(REPORT_COLUMNS, (row.experiment, row.N, row.n, row.trial, row.metric_name,
                                                   row.value))) for row in r.rows],
                "aggregates": {k: list(v) for k, v in r.aggregates.items()},
                "summary": r.summary,
                "config": r.config_echo,
            }
            f.write(json.dumps(document, sort_keys=True, indent=2) + "\n")

    logger.debug("wrote %d rows to %s", len(r.rows), path)


def read_report(path: Union[str, Path]) -> ExperimentReport:
    """Read a JSON report written by emit_report."""

    with open(path) as f:
        document = json.load(f)

    return ExperimentReport(
        rows=[ReportRow(**row) for row in document["rows"]],
        aggregates={k: tuple(v) for k, v in document["aggregates"].items()},  # type: ignore[misc]
        config_echo=document["config"],
        summary=document["summary"],
    )
