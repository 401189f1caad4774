import json
import logging
from pathlib import Path

import numpy as np
import pytest

from robustscatter.doa import sign_test
from robustscatter.errors import ConfigError
from robustscatter.harness import (
    THREADS_ENV,
    angle_grid,
    config_from_dict,
    config_to_dict,
    default_threads,
    dims_key,
    emit_report,
    load_config,
    read_report,
    run_experiment,
)
from robustscatter.scatterSettings import (
    CovarianceKind,
    EntryKind,
    ExperimentKind,
    ExperimentReport,
    ReportRow,
)
from robustscatter.weights import HuberWeight, StudentTWeight

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def make_config(**overrides):
    d = {"experiment": "concentration", "dims": [[10, 30]], "trials": 3, "seed": 1}
    d.update(overrides)
    return config_from_dict(d)


def medians(report: ExperimentReport, metric: str, dims) -> list[float]:
    return [report.median(metric, N, n) for N, n in dims]


def test_config_defaults():
    cfg = config_from_dict({"experiment": "concentration", "dims": [[10, 20]]})
    assert cfg.experiment == ExperimentKind.CONCENTRATION
    assert cfg.dims == [(10, 20)]
    assert cfg.model.kind == CovarianceKind.IDENTITY
    assert cfg.dist.kind == EntryKind.GAUSSIAN_COMPLEX
    assert cfg.weight == StudentTWeight(1.0)
    assert (cfg.trials, cfg.seed, cfg.tol, cfg.max_iter) == (20, 0, 1e-10, 500)
    assert cfg.noise is None


def test_config_weight_forms():
    assert make_config(weight="huber:2.0").weight == HuberWeight(2.0)
    assert make_config(weight={"family": "student_t", "t": 0.5}).weight == StudentTWeight(0.5)


def test_config_collects_every_problem():
    with pytest.raises(ConfigError) as e:
        config_from_dict({
            "experiment": "bogus",
            "dims": [[20, 10]],
            "trials": 0,
            "grid_deg": 0.5,
            "z": 1.0,
            "colour": "red",
        })
    problems = e.value.problems
    assert len(problems) == 6, f"Problems: {problems}"
    assert any("colour" in p for p in problems)
    assert any("0 < N < n" in p for p in problems)


config_errors = [
    {"label": "dims-missing", "d": {"experiment": "spacing"}},
    {"label": "dims-not-integers", "d": {"experiment": "spacing", "dims": [[10.5, 20]]}},
    {"label": "bad-model", "d": {"experiment": "spacing", "dims": [[10, 20]], "model": {"kind": "circulant"}}},
    {"label": "model-extra-key", "d": {"experiment": "spacing", "dims": [[10, 20]],
                                       "model": {"kind": "identity", "size": 3}}},
    {"label": "heavy-student", "d": {"experiment": "spacing", "dims": [[10, 20]],
                                     "dist": {"kind": "student_t_complex", "dof": 5}}},
    {"label": "bad-weight", "d": {"experiment": "spacing", "dims": [[10, 20]], "weight": {"family": "huber"}}},
    {"label": "weight-list", "d": {"experiment": "spacing", "dims": [[10, 20]], "weight": [1, 2]}},
    {"label": "weight-not-numeric", "d": {"experiment": "spacing", "dims": [[10, 20]],
                                          "weight": {"family": "huber", "phi_inf": "two"}}},
    {"label": "weight-null", "d": {"experiment": "spacing", "dims": [[10, 20]],
                                   "weight": {"family": "student_t", "t": None}}},
    {"label": "negative-tol", "d": {"experiment": "spacing", "dims": [[10, 20]], "tol": -1.0}},
    {"label": "angles-powers", "d": {"experiment": "doa_compare", "dims": [[10, 20]], "angles_deg": [0.0, 10.0],
                                     "powers": [1.0]}},
]


@pytest.mark.parametrize("case", config_errors, ids=[c["label"] for c in config_errors])
def test_config_errors(case):
    with pytest.raises(ConfigError):
        config_from_dict(case["d"])


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_config_round_trip():
    cfg = config_from_dict({
        "experiment": "doa_compare",
        "dims": [[10, 40], [20, 80]],
        "model": {"kind": "spiked", "spikes": [4.0, 2.0]},
        "dist": {"kind": "student_t_complex", "dof": 10},
        "noise": {"kind": "qpsk"},
        "weight": "huber:3.0",
        "angles_deg": [-5, 5, 30],
        "powers": [1, 2, 3],
    })
    d = json.loads(json.dumps(config_to_dict(cfg)))
    assert config_from_dict(d) == cfg


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(broken)

    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(listing)


def test_default_threads(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert default_threads() == 1
    monkeypatch.setenv(THREADS_ENV, "4")
    assert default_threads() == 4
    monkeypatch.setenv(THREADS_ENV, "many")
    assert default_threads() == 1


def test_angle_grid():
    grid = angle_grid(0.1)
    assert grid.size == 1801
    assert grid[0] == pytest.approx(-np.pi / 2)
    assert grid[-1] == pytest.approx(np.pi / 2)


def test_rows_and_aggregates():
    cfg = make_config(dims=[[10, 30], [20, 60]], trials=4)
    report = run_experiment(cfg)

    assert len(report.rows) == 8
    assert [(r.N, r.trial) for r in report.rows] == [(10, t) for t in range(4)] + [(20, t) for t in range(4)]
    assert all(r.metric_name == "concentration_max" and r.experiment == "concentration" for r in report.rows)

    median, p05, p95 = report.aggregates[dims_key("concentration_max", 10, 30)]
    assert p05 <= median <= p95
    assert report.summary[dims_key("errors", 20, 60)] == 0.0
    assert report.config_echo["dims"] == [[10, 30], [20, 60]]


@pytest.mark.parametrize("experiment", ["theorem1_gap", "doa_compare"])
def test_reports_identical_across_threads(tmp_path, experiment):
    cfg = make_config(experiment=experiment, dims=[[10, 40], [12, 60]], trials=3, seed=7)
    single = run_experiment(cfg, threads=1)
    pooled = run_experiment(cfg, threads=3)
    assert single == pooled

    for fmt in ("csv", "json"):
        emit_report(single, tmp_path / f"single.{fmt}", fmt)
        emit_report(pooled, tmp_path / f"pooled.{fmt}", fmt)
        assert (tmp_path / f"single.{fmt}").read_bytes() == (tmp_path / f"pooled.{fmt}").read_bytes()


def test_seed_changes_rows():
    first = run_experiment(make_config(seed=1))
    second = run_experiment(make_config(seed=2))
    assert first.values("concentration_max").tolist() != second.values("concentration_max").tolist()


def test_csv_report(tmp_path):
    path = tmp_path / "empty.csv"
    emit_report(ExperimentReport(), path)
    assert path.read_text() == "experiment,N,n,trial,metric_name,value\n"

    rows = [ReportRow("spacing", 10, 20, 0, "norm_gap", 0.25), ReportRow("spacing", 10, 20, 1, "norm_gap", 0.5)]
    emit_report(ExperimentReport(rows=rows), path)
    lines = path.read_text().split("\n")
    assert lines[:3] == [
        "experiment,N,n,trial,metric_name,value",
        "spacing,10,20,0,norm_gap,0.25",
        "spacing,10,20,1,norm_gap,0.5",
    ]
    assert lines[3] == ""


def test_json_report_round_trip(tmp_path):
    report = run_experiment(make_config(experiment="support_diagnostic", trials=2))
    path = tmp_path / "report.json"
    emit_report(report, path, "json")

    document = json.loads(path.read_text())
    assert sorted(document) == ["aggregates", "config", "rows", "summary"]
    assert read_report(path) == report


def test_failed_trials_become_error_rows(caplog):
    cfg = make_config(experiment="theorem1_gap", max_iter=1, tol=1e-15, trials=2)
    with caplog.at_level(logging.WARNING, logger="robustscatter.harness"):
        report = run_experiment(cfg)

    assert [r.metric_name for r in report.rows] == ["error", "error"]
    assert report.summary[dims_key("errors", 10, 30)] == 2.0
    assert "failed" in caplog.text


def test_en_validation_identity():
    cfg = make_config(experiment="en_validation", dims=[[100, 200]], trials=3)
    report = run_experiment(cfg)
    np.testing.assert_allclose(report.values("e"), (-3 + np.sqrt(17)) / 2, atol=1e-9)
    assert np.all(report.values("en_gap") < 0.05)


def test_existence_iterations():
    report = run_experiment(load_config(CONFIG_DIR / "existence.json"))
    assert report.summary[dims_key("errors", 50, 200)] == 0.0
    assert np.all(report.values("converged") == 1.0)
    assert np.all(report.values("feasible") == 1.0)
    assert np.all(report.values("maronna_condition") == 1.0)
    assert np.all(report.values("fixed_point_residual") < 1e-6)
    assert np.all(report.values("stop_residual") <= 1e-10)


def test_existence_iterations_without_convergence():
    cfg = make_config(experiment="existence_iterations", dims=[[10, 40]], trials=2, tol=1e-15, max_iter=1)
    report = run_experiment(cfg)
    assert np.all(report.values("converged") == 0.0)
    assert np.all(report.values("iterations") == 1.0)
    assert np.all(report.values("stop_residual") > 1e-15)
    assert report.values("fixed_point_residual").size == 0
    assert report.summary[dims_key("errors", 10, 40)] == 0.0


def test_lemma_checks():
    cfg = load_config(CONFIG_DIR / "lemma_checks.json")
    report = run_experiment(cfg)
    assert report.values("mil_residual").size == 100
    assert np.max(report.values("mil_residual")) < 1e-12
    assert np.max(report.values("rank_one_ratio")) <= 1.0
    assert np.all(report.values("interlacing_ok") == 1.0)


def test_spacing_follows_weyl():
    report = run_experiment(make_config(experiment="spacing", weight="huber:2.0", dims=[[10, 20], [20, 40]]))
    assert np.all(report.values("weyl_ok") == 1.0)
    assert np.all(report.values("spacing_max") <= report.values("norm_gap") + 1e-10)


def test_doa_summary():
    cfg = make_config(experiment="doa_compare", dims=[[10, 100]], trials=4, sigma2=0.1)
    report = run_experiment(cfg)
    wins = report.summary[dims_key("robust_wins", 10, 100)]
    losses = report.summary[dims_key("robust_losses", 10, 100)]
    assert wins + losses <= 4
    if wins + losses:
        assert 0.0 < report.summary[dims_key("sign_test_p", 10, 100)] <= 1.0
        assert 0.0 < report.summary[dims_key("noninferiority_p", 10, 100)] <= 1.0
    assert report.values("mse_music").size == 4


@pytest.mark.slow
@pytest.mark.parametrize("weight", ["student_t:1.0", "huber:2.0"])
def test_norm_gap_shrinks_with_dimension(weight):
    dims = [[25, 50], [50, 100], [100, 200], [200, 400]]
    report = run_experiment(make_config(experiment="theorem1_gap", dims=dims, trials=20, seed=2026, weight=weight))
    gaps = medians(report, "norm_gap", dims)
    assert all(a > b for a, b in zip(gaps, gaps[1:])), f"median norm gaps {gaps}"
    assert gaps[-1] < 0.5 * gaps[0], f"median norm gaps {gaps}"

    spacing = medians(report, "spacing_max", dims)
    assert all(a > b for a, b in zip(spacing, spacing[1:])), f"median spacings {spacing}"
    assert np.all(report.values("spacing_max") <= report.values("norm_gap") + 1e-10)


@pytest.mark.slow
def test_concentration_shrinks_with_dimension():
    report = run_experiment(load_config(CONFIG_DIR / "concentration.json"))
    small, large = medians(report, "concentration_max", [[50, 100], [200, 400]])
    assert large < 0.6 * small, f"median deviation {small} at N=50, {large} at N=200"


@pytest.mark.slow
def test_support_diagnostic():
    report = run_experiment(load_config(CONFIG_DIR / "support.json"))
    assert report.summary[dims_key("pass_fraction", 200, 400)] >= 47 / 50


@pytest.mark.slow
def test_robust_gmusic_tracks_gmusic():
    cfg = make_config(experiment="doa_compare", dims=[[100, 400]], trials=30, seed=3)
    report = run_experiment(cfg)
    assert report.median("spectrum_gap") < 0.05, f"median spectrum gap {report.median('spectrum_gap')}"


@pytest.mark.slow
def test_robust_gmusic_under_heavy_tails():
    report = run_experiment(load_config(CONFIG_DIR / "doa_heavy_tail.json"))
    assert report.values("mse_robust").size == report.values("mse_gmusic").size == 100

    wins = report.summary[dims_key("robust_wins", 40, 160)]
    losses = report.summary[dims_key("robust_losses", 40, 160)]
    noninferiority = report.summary[dims_key("noninferiority_p", 40, 160)]
    # robust G-MUSIC does not lose significantly more often than G-MUSIC at the 5% level
    assert noninferiority >= 0.05, f"robust wins {wins}, losses {losses}, one sided p {noninferiority}"
    p_value = sign_test(int(wins), int(wins + losses))
    assert report.summary[dims_key("sign_test_p", 40, 160)] == pytest.approx(p_value)
