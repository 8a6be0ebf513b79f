"""Seeded Monte-Carlo experiments: FPR/FNR tables, the k/n sweep, fusion accuracy, timing.

Every trial draws fresh training, reference and detection sets from a seed
derived from ``(base_seed, approach, scenario, zeta, trial)``, so a whole
table is a deterministic function of the base seed and any single trial
can be reproduced on its own.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import DriftKind, ScenarioSpec, derive_seed, sample_triplet
from .detectors import (
    DetectorConfig,
    DetectorOutputs,
    Method,
    OutputType,
    bd_detect,
    detect,
    detector_outputs,
    fusion_configs,
)
from .distances import DistanceMetric, MetricKind, mmd_u_statistic, kl_knn_estimate, wasserstein
from .errors import ConfigError, RatioInfeasible
from .fusion import (
    FusionKind,
    FusionModel,
    average_model,
    calibrate_threshold,
    fusion_decide,
    table_from_outputs,
    train_classifier,
    train_perceptron,
)

log = logging.getLogger(__name__)

DEFAULT_ZETAS: Dict[str, Tuple[float, ...]] = {
    "nodrift": (0.0,),
    "mean": (0.01, 0.02, 0.03, 0.04),
    "var": (1.005, 1.01, 1.05, 1.10),
    "cov": (0.05, 0.06, 0.07, 0.08),
}
FAST_KSBC_SIZE = 10_000
FAST_KSBC_MEAN_ZETAS = (0.05, 0.1)

DEFAULT_RATIOS: Tuple[Tuple[int, int], ...] = (
    (5, 1000), (25, 200), (50, 100), (100, 50), (200, 25), (250, 20), (500, 10),
)
RATIO_SCENARIOS = (("nodrift", 0.0), ("mean", 0.03), ("var", 1.01), ("cov", 0.07))


def _bd(metric, n, k, alpha=0.05):
    return DetectorConfig(Method.BD, DistanceMetric(metric), n, k, alpha=alpha)


def _pt(metric, size, alpha=0.05, B=100):
    return DetectorConfig(Method.PT, DistanceMetric(metric), 1, size, B=B, alpha=alpha)


def budget_detectors(alpha: float = 0.05, fast: bool = False) -> Dict[str, DetectorConfig]:
    """Detector settings with matched (about 1e8 operation) budgets at m = 100."""
    return {
        "EMD-BD": _bd("emd", 50, 100, alpha),
        "EMD-PT": _pt("emd", 76, alpha),
        "MMD-BD": _bd("mmd", 100, 100, alpha),
        "MMD-PT": _pt("mmd", 100, alpha),
        "KL-BD": _bd("kl", 100, 100, alpha),
        "KL-PT": _pt("kl", 100, alpha),
        "KS-BC": DetectorConfig(Method.KSBC, None, 1, FAST_KSBC_SIZE if fast else 87_900, alpha=alpha),
    }


# --------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class ResultRow:
    approach: str
    scenario: str
    zeta: float
    rate_kind: str
    rate: float
    trials: int
    mean_wall_time: float = 0.0
    param: str = ""

    @property
    def key(self):
        return (self.approach, self.scenario, self.zeta, self.param)


@dataclass
class ResultTable:
    """FPR for no-drift cells, FNR for drift cells, one row per cell."""

    rows: List[ResultRow] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def add(self, row: ResultRow):
        if not 0.0 <= row.rate <= 1.0:
            raise ValueError("rates lie in [0, 1]")
        expected = "FPR" if row.scenario == "nodrift" else "FNR"
        if row.rate_kind != expected:
            raise ValueError(f"{row.scenario} cells report {expected}")
        self.rows.append(row)

    def get(self, approach: str, scenario: str, zeta: float, param: str = "") -> ResultRow:
        for r in self.rows:
            if r.approach == approach and r.scenario == scenario and math.isclose(r.zeta, zeta) \
                    and r.param == param:
                return r
        raise KeyError((approach, scenario, zeta, param))

    def rate(self, approach: str, scenario: str, zeta: float = 0.0, param: str = "") -> float:
        return self.get(approach, scenario, zeta, param).rate

    @property
    def approaches(self) -> List[str]:
        seen = []
        for r in self.rows:
            if r.approach not in seen:
                seen.append(r.approach)
        return seen

    def columns(self, approach: str) -> List[Tuple[str, float]]:
        return [(r.scenario, r.zeta) for r in self.rows if r.approach == approach]

    def __len__(self):
        return len(self.rows)


def _make_row(approach, spec_kind, zeta, detections, trials, wall, param=""):
    if spec_kind == "nodrift":
        return ResultRow(approach, spec_kind, zeta, "FPR", detections / trials, trials, wall, param)
    return ResultRow(approach, spec_kind, zeta, "FNR", 1.0 - detections / trials, trials, wall, param)


# --------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    """Monte-Carlo protocol.

    ``detectors`` maps approach names to configurations (matched budgets by
    default); ``scenarios`` maps drift kinds to zeta lists.  ``fast``
    shrinks KS-BC to ``n*k = 10_000`` and moves its mean-drift grid to
    larger shifts so the whole table stays affordable.
    """

    scenarios: Dict[str, Sequence[float]] = field(default_factory=lambda: dict(DEFAULT_ZETAS))
    detectors: Optional[Dict[str, DetectorConfig]] = None
    simulations: int = 100
    alpha: float = 0.05
    m: int = 100
    base_seed: int = 0
    fast: bool = False
    output_dir: Optional[str] = None
    formats: Sequence[str] = ("csv", "json", "plotdata")
    include_timing: bool = False
    # problem 2
    fusion_n: int = 50
    fusion_k: int = 100
    train_null: int = 50
    train_per_zeta: int = 10
    calibrate_xi: bool = False
    calibration_trials: int = 100

    def __post_init__(self):
        if self.simulations < 1:
            raise ConfigError("simulations must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        for kind, zetas in self.scenarios.items():
            try:
                for z in zetas:
                    ScenarioSpec(kind, z, self.m)
            except ValueError as exc:
                raise ConfigError(f"bad scenario {kind}: {exc}") from exc
        if self.detectors is None:
            self.detectors = budget_detectors(self.alpha, self.fast)

    def cells(self, approach: str) -> List[Tuple[str, float]]:
        out = []
        for kind, zetas in self.scenarios.items():
            if self.fast and approach == "KS-BC" and kind == "mean":
                zetas = FAST_KSBC_MEAN_ZETAS
            out.extend((kind, float(z)) for z in zetas)
        return out

    def notes(self) -> List[str]:
        notes = [f"base_seed={self.base_seed}", f"simulations={self.simulations}", f"alpha={self.alpha}",
                 f"m={self.m}"]
        if self.fast:
            notes.append(f"fast profile: KS-BC uses n*k={FAST_KSBC_SIZE} and mean-drift zeta "
                         f"{list(FAST_KSBC_MEAN_ZETAS)} instead of n*k=87900")
        return notes


# --------------------------------------------------------------------------
# problem 1

def trial_seed(base: int, approach: str, kind: str, zeta: float, trial: int) -> int:
    return derive_seed(base, approach, kind, repr(float(zeta)), trial)


def run_cell(approach: str, det: DetectorConfig, kind: str, zeta: float, simulations: int,
             base_seed: int = 0, m: int = 100) -> ResultRow:
    """Run one (approach, scenario) cell and aggregate its rate."""
    spec = ScenarioSpec(kind, zeta, m)
    size = det.set_size
    hits = 0
    wall = 0.0
    for t in range(simulations):
        seed = trial_seed(base_seed, approach, kind, zeta, t)
        triplet = sample_triplet(spec, size, derive_seed(seed, "data"))
        report = detect(triplet, det, derive_seed(seed, "detector"))
        hits += bool(report.drift_detected)
        wall += report.wall_time
    return _make_row(approach, kind, zeta, hits, simulations, wall / simulations)


def run_problem1_experiment(cfg: ExperimentConfig, approaches: Optional[Sequence[str]] = None,
                            progress: Optional[Callable[[ResultRow], None]] = None,
                            workers: int = 1) -> ResultTable:
    """FPR/FNR of each configured detector over the scenario grid.

    ``workers > 1`` runs cells in separate processes; the table is the same.
    """
    table = ResultTable(notes=cfg.notes())
    jobs = [(a, cfg.detectors[a], kind, zeta, cfg.simulations, cfg.base_seed, cfg.m)
            for a in approaches or list(cfg.detectors) for kind, zeta in cfg.cells(a)]
    if workers > 1:
        # cells are independent and seeded by name, so the schedule cannot change results
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            rows = pool.map(_run_job, jobs)
    else:
        rows = map(_run_job, jobs)
    for row in rows:
        table.add(row)
        log.info("%s %s %.4g -> %s %.3f", row.approach, row.scenario, row.zeta, row.rate_kind, row.rate)
        if progress:
            progress(row)
    return table


def _run_job(job):
    return run_cell(*job)


def run_ratio_sweep(total: int = 5000, ratios: Sequence[Tuple[int, int]] = DEFAULT_RATIOS,
                    cfg: Optional[ExperimentConfig] = None,
                    metrics: Sequence[str] = ("emd", "mmd", "kl"),
                    scenarios: Sequence[Tuple[str, float]] = RATIO_SCENARIOS) -> ResultTable:
    """BD error rates at fixed ``n * k = total`` for each ``(k, n)`` pair."""
    cfg = cfg or ExperimentConfig()
    for k, n in ratios:
        if n * k != total:
            raise RatioInfeasible(f"k={k}, n={n} does not give n*k={total}")
        if n < 2:
            raise RatioInfeasible(f"k={k}, n={n}: the paired t-test needs n >= 2")
    table = ResultTable(notes=cfg.notes() + [f"total n*k={total}"])
    for metric in metrics:
        approach = f"{MetricKind(metric).name}-BD"
        for k, n in ratios:
            det = _bd(metric, n, k, cfg.alpha)
            param = f"k/n={k}/{n}"
            for kind, zeta in scenarios:
                row = run_cell(f"{approach}:{param}", det, kind, zeta, cfg.simulations, cfg.base_seed, cfg.m)
                table.add(replace(row, approach=approach, param=param))
    return table


# --------------------------------------------------------------------------
# problem 2

FUSION_APPROACHES = ("AVG", "PL", "LR-p", "kNN-p", "MLP-p", "LR-s", "kNN-s", "MLP-s",
                     "EMD-BD", "MMD-BD", "KL-BD", "KS-BC")


def _fusion_cells(cfg: ExperimentConfig):
    return [(kind, float(z)) for kind, zetas in cfg.scenarios.items() for z in zetas]


def _outputs_for(cfg, tag, kind, zeta, index) -> DetectorOutputs:
    seed = derive_seed(cfg.base_seed, "problem2", tag, kind, repr(float(zeta)), index)
    spec = ScenarioSpec(kind, zeta, cfg.m)
    triplet = sample_triplet(spec, cfg.fusion_n * cfg.fusion_k, derive_seed(seed, "data"))
    return detector_outputs(triplet, fusion_configs(cfg.fusion_n, cfg.fusion_k, cfg.alpha),
                            derive_seed(seed, "detector"))


def generate_fusion_training(cfg: ExperimentConfig):
    """Featurised priors: ``train_null`` no-drift sets plus ``train_per_zeta`` per drift cell."""
    outputs, labels = [], []
    for kind, zeta in _fusion_cells(cfg):
        count = cfg.train_null if kind == "nodrift" else cfg.train_per_zeta
        for i in range(count):
            outputs.append(_outputs_for(cfg, "train", kind, zeta, i))
            labels.append(0 if kind == "nodrift" else 1)
    return outputs, np.array(labels)


def train_fusion_models(outputs, labels, cfg: ExperimentConfig, pc_reading: str = "nodrift") -> Dict[str, FusionModel]:
    p_table = table_from_outputs(outputs, labels, OutputType.PVALUES)
    s_table = table_from_outputs(outputs, labels, OutputType.STATISTICS)
    models = {"AVG": average_model(cfg.alpha), "PL": train_perceptron(p_table, cfg.alpha)}
    for suffix, table in (("p", p_table), ("s", s_table)):
        for kind in (FusionKind.LR, FusionKind.KNN, FusionKind.MLP):
            model = train_classifier(table, kind, rng=derive_seed(cfg.base_seed, "mlp-init", suffix),
                                     pc_reading=pc_reading)
            models[model.name] = model
    return models


def decide_all(models: Dict[str, FusionModel], out: DetectorOutputs) -> Dict[str, bool]:
    """Decisions of every fusion model and of the four raw detectors on one triplet."""
    decisions = {}
    for name, model in models.items():
        decisions[name] = fusion_decide(model, out.features(model.output_type))
    for name, report in zip(("EMD-BD", "MMD-BD", "KL-BD", "KS-BC"), out.reports):
        decisions[name] = bool(report.drift_detected)
    return decisions


@dataclass
class Problem2Result:
    table: ResultTable
    accuracy: Dict[str, float]
    models: Dict[str, FusionModel]


def run_problem2_experiment(cfg: ExperimentConfig, pc_reading: str = "nodrift",
                            training=None) -> Problem2Result:
    """Train every combiner on the prior-detection mix and score it on fresh trials.

    Accuracy pools all test trials: correct decisions / total decisions.
    ``training`` may pass precomputed ``(outputs, labels)``.
    """
    outputs, labels = training if training is not None else generate_fusion_training(cfg)
    models = train_fusion_models(outputs, labels, cfg, pc_reading)
    notes = cfg.notes() + [f"fusion n={cfg.fusion_n} k={cfg.fusion_k}, {len(labels)} training examples"]
    if cfg.calibrate_xi:
        null = [_outputs_for(cfg, "calibration", "nodrift", 0.0, i) for i in range(cfg.calibration_trials)]
        for model in models.values():
            if model.kind in (FusionKind.LR, FusionKind.KNN, FusionKind.MLP):
                feats = np.array([o.features(model.output_type) for o in null])
                model.threshold = calibrate_threshold(model, feats, cfg.alpha)
                notes.append(f"{model.name}: xi calibrated to {model.threshold!r}")
    counts = {name: 0 for name in FUSION_APPROACHES}
    correct = {name: 0 for name in FUSION_APPROACHES}
    total = 0
    table = ResultTable(notes=notes)
    for kind, zeta in _fusion_cells(cfg):
        hits = {name: 0 for name in FUSION_APPROACHES}
        truth = kind != "nodrift"
        for t in range(cfg.simulations):
            out = _outputs_for(cfg, "test", kind, zeta, t)
            for name, d in decide_all(models, out).items():
                hits[name] += d
                correct[name] += d == truth
            total += 1
        for name in FUSION_APPROACHES:
            counts[name] += hits[name]
        rows = {name: _make_row(name, kind, zeta, hits[name], cfg.simulations, 0.0) for name in FUSION_APPROACHES}
        for name in FUSION_APPROACHES:
            table.add(rows[name])
    # group rows by approach for a stable, readable order
    order = {name: i for i, name in enumerate(FUSION_APPROACHES)}
    table.rows.sort(key=lambda r: order[r.approach])
    accuracy = {name: correct[name] / total for name in FUSION_APPROACHES}
    return Problem2Result(table, accuracy, models)


def accuracy_table(accuracy: Dict[str, float], notes=()) -> ResultTable:
    """Accuracies packed as a :class:`ResultTable` (``rate`` = accuracy) for emission."""
    table = ResultTable(notes=list(notes))
    for name, acc in accuracy.items():
        table.rows.append(ResultRow(name, "overall", 0.0, "ACC", acc, 0, 0.0))
    return table


# --------------------------------------------------------------------------
# timing

def _time_call(fn, repeats: int) -> float:
    best = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best.append(time.perf_counter() - start)
    return float(np.median(best))


def loglog_slope(xs, ts) -> float:
    """Least-squares slope of log(time) against log(size)."""
    return float(np.polyfit(np.log(xs), np.log(ts), 1)[0])


@dataclass
class BenchResult:
    rows: List[dict]
    slopes: Dict[str, float]
    pt_ratio: Dict[str, float]


def scaling_probe(metric: str, vary: str, values: Sequence[int], fixed: int, m: int = 100,
                  repeats: int = 3, seed: int = 0) -> Tuple[List[float], float]:
    """Wall time of ``bd_detect`` while varying ``k`` or ``n``; returns times and log-log slope.

    MMD runs with a fixed bandwidth so the timing isolates the distance
    evaluations.
    """
    times = []
    for v in values:
        n, k = (fixed, v) if vary == "k" else (v, fixed)
        det = DetectorConfig(Method.BD, DistanceMetric(metric, mmd_sigma=math.sqrt(2 * m)), n, k)
        triplet = sample_triplet(ScenarioSpec("nodrift", m=m), n * k, derive_seed(seed, metric, vary, v))
        bd_detect(triplet, det, 1)  # warm-up
        times.append(_time_call(lambda: bd_detect(triplet, det, 1), repeats))
    return times, loglog_slope(values, times)


def run_budget_bench(cfg: Optional[ExperimentConfig] = None, repeats: int = 3,
                     k_values=(25, 50, 100, 200), n_values=(8, 16, 32, 64),
                     probe_n: int = 16, probe_k: int = 50, include_budget_grid: bool = True) -> BenchResult:
    """Time the matched-budget configurations and probe the complexity exponents."""
    cfg = cfg or ExperimentConfig()
    rows = []
    if include_budget_grid:
        for name, det in budget_detectors(cfg.alpha, cfg.fast).items():
            triplet = sample_triplet(ScenarioSpec("nodrift", m=cfg.m), det.set_size, derive_seed(cfg.base_seed, name))
            secs = _time_call(lambda: detect(triplet, det, 1), 1)
            rows.append({"approach": name, "n": det.n, "k": det.k, "nk": det.set_size, "seconds": secs})
    slopes = {}
    for metric in ("emd", "mmd", "kl"):
        label = f"{MetricKind(metric).name}-BD"
        tk, sk = scaling_probe(metric, "k", k_values, probe_n, cfg.m, repeats, cfg.base_seed)
        tn, sn = scaling_probe(metric, "n", n_values, probe_k, cfg.m, repeats, cfg.base_seed)
        slopes[f"{label} vs k"] = sk
        slopes[f"{label} vs n"] = sn
        for v, t in zip(k_values, tk):
            rows.append({"approach": f"{label} probe", "n": probe_n, "k": v, "nk": probe_n * v, "seconds": t})
        for v, t in zip(n_values, tn):
            rows.append({"approach": f"{label} probe", "n": v, "k": probe_k, "nk": v * probe_k, "seconds": t})
    pt_ratio = {}
    single = {"emd": wasserstein, "mmd": lambda a, b: mmd_u_statistic(a, b, math.sqrt(2 * cfg.m)),
              "kl": kl_knn_estimate}
    for name in ("EMD-PT", "MMD-PT", "KL-PT"):
        det = budget_detectors(cfg.alpha)[name]
        if det.metric.kind is MetricKind.MMD:
            det = replace(det, metric=DistanceMetric("mmd", mmd_sigma=math.sqrt(2 * cfg.m)))
        triplet = sample_triplet(ScenarioSpec("nodrift", m=cfg.m), det.set_size, derive_seed(cfg.base_seed, name, "pt"))
        pooled = np.vstack([triplet.training, triplet.reference])
        fn = single[det.metric.kind.value]
        t_single = _time_call(lambda: fn(pooled, triplet.detection), max(repeats, 5))
        t_pt = _time_call(lambda: permutation_detect_timed(triplet, det), repeats)
        pt_ratio[name] = t_pt / (det.B * t_single)
    return BenchResult(rows, slopes, pt_ratio)


def permutation_detect_timed(triplet, det):
    from .detectors import permutation_detect
    return permutation_detect(triplet, det, 1)
