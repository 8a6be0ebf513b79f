import json

import numpy as np
import pytest

from driftwatch.core import ScenarioSpec, derive_seed, sample_triplet
from driftwatch.detectors import DetectorConfig
from driftwatch.distances import DistanceMetric
from driftwatch.errors import ConfigError, RatioInfeasible
from driftwatch.harness import (
    FUSION_APPROACHES,
    DEFAULT_RATIOS,
    DEFAULT_ZETAS,
    ExperimentConfig,
    ResultRow,
    ResultTable,
    loglog_slope,
    run_cell,
    run_problem1_experiment,
    run_problem2_experiment,
    run_ratio_sweep,
    scaling_probe,
    budget_detectors,
    trial_seed,
)
from driftwatch.report import emit_report, load_report, plot_series, table_to_json, validate_report_json


def small_detectors():
    return {
        "EMD-BD": DetectorConfig("bd", "emd", 4, 10),
        "MMD-PT": DetectorConfig("pt", "mmd", 1, 20, B=10),
        "KS-BC": DetectorConfig("ksbc", None, 1, 40),
    }


def small_config(**kw):
    base = dict(detectors=small_detectors(), simulations=2, m=4, base_seed=5,
                scenarios={"nodrift": [0.0], "mean": [0.5], "cov": [0.3]})
    base.update(kw)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(simulations=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        ExperimentConfig(scenarios={"cov": [1.5]})


def test_default_grid_shape():
    cfg = ExperimentConfig()
    assert list(cfg.detectors) == ["EMD-BD", "EMD-PT", "MMD-BD", "MMD-PT", "KL-BD", "KL-PT", "KS-BC"]
    assert all(len(cfg.cells(a)) == 13 for a in cfg.detectors)
    assert cfg.detectors["KS-BC"].set_size == 87_900
    assert cfg.detectors["EMD-PT"].set_size == 76
    assert cfg.detectors["EMD-BD"].n == 50 and cfg.detectors["EMD-BD"].k == 100


def test_fast_profile():
    cfg = ExperimentConfig(fast=True)
    assert cfg.detectors["KS-BC"].set_size == 10_000
    assert [z for k, z in cfg.cells("KS-BC") if k == "mean"] == [0.05, 0.1]
    assert [z for k, z in cfg.cells("MMD-BD") if k == "mean"] == list(DEFAULT_ZETAS["mean"])
    assert any("fast profile" in n for n in cfg.notes())


def test_cell_seeds_unique():
    cfg = ExperimentConfig()
    seeds = {trial_seed(0, a, k, z, t) for a in cfg.detectors for k, z in cfg.cells(a) for t in range(5)}
    assert len(seeds) == 7 * 13 * 5


# ---------------------------------------------------------------- problem 1

def test_single_simulation_rates_are_binary():
    table = run_problem1_experiment(small_config(simulations=1))
    assert len(table) == 9
    assert all(r.rate in (0.0, 1.0) for r in table.rows)
    assert {r.rate_kind for r in table.rows if r.scenario == "nodrift"} == {"FPR"}
    assert {r.rate_kind for r in table.rows if r.scenario != "nodrift"} == {"FNR"}


def test_problem1_deterministic_and_schedule_free(tmp_path):
    a = run_problem1_experiment(small_config())
    b = run_problem1_experiment(small_config())
    c = run_problem1_experiment(small_config(), workers=2)
    assert table_to_json(a) == table_to_json(b) == table_to_json(c)
    emit_report(a, tmp_path / "a")
    emit_report(b, tmp_path / "b")
    for f in (tmp_path / "a").rglob("*.*"):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_trial_isolation():
    # a trial's data depends only on its own index, so adding trials leaves earlier ones alone
    spec = ScenarioSpec("mean", 0.5, 4)
    first = [sample_triplet(spec, 20, derive_seed(trial_seed(5, "X", "mean", 0.5, t), "data")).detection
             for t in range(3)]
    again = sample_triplet(spec, 20, derive_seed(trial_seed(5, "X", "mean", 0.5, 1), "data")).detection
    np.testing.assert_array_equal(first[1], again)
    assert not np.array_equal(first[0], first[1])
    det = DetectorConfig("bd", "mmd", 4, 5)
    r3 = run_cell("X", det, "mean", 0.5, 3, 5, 4)
    r1 = run_cell("X", det, "mean", 0.5, 1, 5, 4)
    assert r3.trials == 3 and r1.trials == 1


def test_result_table_rules():
    t = ResultTable()
    with pytest.raises(ValueError):
        t.add(ResultRow("A", "nodrift", 0.0, "FNR", 0.1, 10))
    with pytest.raises(ValueError):
        t.add(ResultRow("A", "mean", 0.01, "FNR", 1.2, 10))
    t.add(ResultRow("A", "mean", 0.01, "FNR", 0.2, 10))
    assert t.rate("A", "mean", 0.01) == 0.2
    with pytest.raises(KeyError):
        t.get("B", "mean", 0.01)


def test_problem1_fnr_falls_with_zeta():
    cfg = ExperimentConfig(detectors={"MMD-BD": DetectorConfig("bd", DistanceMetric("mmd"), 10, 20)},
                           scenarios={"mean": [0.0001, 0.5]}, simulations=30, m=5)
    t = run_problem1_experiment(cfg)
    assert t.rate("MMD-BD", "mean", 0.5) < t.rate("MMD-BD", "mean", 0.0001) - 0.5


# ---------------------------------------------------------------- ratio sweep

def test_ratio_sweep_rejects_infeasible():
    with pytest.raises(RatioInfeasible):
        run_ratio_sweep(5000, [(5000, 1)], ExperimentConfig(simulations=1))
    with pytest.raises(RatioInfeasible):
        run_ratio_sweep(5000, [(7, 700)], ExperimentConfig(simulations=1))


def test_ratio_sweep_shape():
    cfg = ExperimentConfig(simulations=1, m=3)
    t = run_ratio_sweep(5000, DEFAULT_RATIOS, cfg, metrics=("mmd", "kl"))
    assert len(t) == 2 * 7 * 4
    params = {r.param for r in t.rows if r.approach == "MMD-BD" and r.scenario == "mean"}
    assert len(params) == 7 and "k/n=5/1000" in params


@pytest.mark.slow
def test_ratio_sweep_mmd_prefers_large_batches():
    cfg = ExperimentConfig(simulations=100)
    t = run_ratio_sweep(5000, [(5, 1000), (500, 10)], cfg, metrics=("mmd",), scenarios=[("mean", 0.03)])
    assert t.rate("MMD-BD", "mean", 0.03, "k/n=500/10") <= t.rate("MMD-BD", "mean", 0.03, "k/n=5/1000")


# ---------------------------------------------------------------- problem 2

def test_problem2_shape_and_accuracy_bookkeeping():
    cfg = ExperimentConfig(m=4, fusion_n=4, fusion_k=25, train_null=6, train_per_zeta=2, simulations=2)
    res = run_problem2_experiment(cfg)
    assert len(res.table) == 12 * 13
    assert res.table.approaches == list(FUSION_APPROACHES)
    assert set(res.accuracy) == set(FUSION_APPROACHES)
    for name in FUSION_APPROACHES:
        rows = [r for r in res.table.rows if r.approach == name]
        recomposed = np.mean([1 - r.rate for r in rows])
        assert res.accuracy[name] == pytest.approx(recomposed)
    # a constant no-drift answer is right on exactly one cell of thirteen
    assert np.mean([1.0] + [0.0] * 12) == pytest.approx(100 / 1300)


def test_problem2_calibration_notes():
    cfg = ExperimentConfig(m=3, fusion_n=4, fusion_k=25, train_null=6, train_per_zeta=2, simulations=1,
                           calibrate_xi=True, calibration_trials=20, scenarios={"nodrift": [0.0], "mean": [0.5]})
    res = run_problem2_experiment(cfg)
    assert sum("calibrated" in n for n in res.table.notes) == 6


# ---------------------------------------------------------------- reports

def full_grid_table():
    t = ResultTable(notes=["base_seed=0"])
    rng = np.random.default_rng(0)
    for a in budget_detectors():
        for kind, zetas in DEFAULT_ZETAS.items():
            for z in zetas:
                t.add(ResultRow(a, kind, z, "FPR" if kind == "nodrift" else "FNR",
                                round(float(rng.uniform()), 2), 100, float(rng.uniform())))
    return t


def test_csv_round_trip(tmp_path):
    t = full_grid_table()
    emit_report(t, tmp_path, ["csv"], include_timing=True)
    back = load_report(tmp_path / "results.csv")
    assert back.rows == t.rows and back.notes == t.notes


def test_json_round_trip_and_schema(tmp_path):
    t = full_grid_table()
    emit_report(t, tmp_path, ["json"])
    doc = json.loads((tmp_path / "results.json").read_text())
    validate_report_json(doc)
    back = load_report(tmp_path / "results.json")
    assert [r.rate for r in back.rows] == [r.rate for r in t.rows]
    assert all(r.mean_wall_time == 0.0 for r in back.rows)


def test_plotdata_series():
    series = plot_series(full_grid_table())
    mean = [k for k in series if k.endswith("_mean.csv")]
    assert len(mean) == 7
    lines = series["MMD-BD_mean.csv"].splitlines()
    assert lines[0] == "zeta,FNR" and [l.split(",")[0] for l in lines[1:]] == ["0.01", "0.02", "0.03", "0.04"]
    assert len(series) == 7 * 3


def test_unknown_format(tmp_path):
    with pytest.raises(ConfigError):
        emit_report(full_grid_table(), tmp_path, ["xml"])


# ---------------------------------------------------------------- timing

def test_loglog_slope_exact_power_law():
    xs = np.array([25, 50, 100, 200])
    assert loglog_slope(xs, 3e-6 * xs ** 2.7) == pytest.approx(2.7)


def test_scaling_probe_n_is_linear():
    times, slope = scaling_probe("mmd", "n", (8, 16, 32, 64), 25, m=20, repeats=3)
    assert len(times) == 4
    assert 0.5 <= slope <= 1.5
