"""Unsupervised drift detectors: batched distance, permutation testing, KS-BC.

All detectors take a :class:`~driftwatch.core.DetectionTriplet`, a
:class:`DetectorConfig` and a seed, and return a :class:`DriftReport`.
Given the same three inputs the report is bit-for-bit reproducible
(apart from ``wall_time``).
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .core import DetectionTriplet, RngLike, as_seed, derive_seed, make_rng, partition
from .distances import (
    DistanceMetric,
    MetricKind,
    emd_from_cost,
    kl_from_dist,
    median_heuristic_sigma,
    mmd_from_sqdist,
)
from .errors import MetricMissing, SizeMismatch, TooFewRows
from .stats import (
    bonferroni_reject,
    empirical_p_value,
    ks_pvalue,
    ks_statistic_sorted,
    paired_t_test,
)


class Method(str, enum.Enum):
    BD = "bd"
    PT = "pt"
    KSBC = "ksbc"


@dataclass(frozen=True)
class DetectorConfig:
    """Detector choice and sizes.

    ``n`` and ``k`` are the batch count and size for BD.  For PT and KS-BC
    only ``n * k`` matters (the size of each of the three sets).  Setting
    ``k=None`` lets BD accept sets of different sizes as long as each
    splits into ``n`` equal batches.
    """

    method: Method
    metric: Optional[DistanceMetric] = None
    n: int = 100
    k: Optional[int] = 100
    B: int = 100
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if isinstance(self.metric, (str, MetricKind)):
            object.__setattr__(self, "metric", DistanceMetric(self.metric))
        if self.method is not Method.KSBC and self.metric is None:
            raise MetricMissing(f"{self.method.value} detection needs a distance metric")
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.n < 1 or (self.k is not None and self.k < 1):
            raise ValueError("n and k must be positive")

    @property
    def name(self) -> str:
        if self.method is Method.KSBC:
            return "KS-BC"
        return f"{self.metric.kind.name}-{self.method.name}"

    @property
    def set_size(self) -> Optional[int]:
        return None if self.k is None else self.n * self.k

    def to_dict(self) -> dict:
        out = {"method": self.method.value, "n": self.n, "k": self.k, "B": self.B, "alpha": self.alpha}
        if self.metric is not None:
            out["metric"] = self.metric.kind.value
            out["mmd_sigma"] = self.metric.mmd_sigma
            out["kl_k"] = self.metric.kl_k
        return out


@dataclass
class DriftReport:
    drift_detected: bool
    p_value: float
    statistic: float
    detector: str
    per_batch_distances: Optional[tuple] = None
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            return v

        out = {
            "drift_detected": bool(self.drift_detected),
            "p_value": clean(float(self.p_value)),
            "statistic": clean(float(self.statistic)),
            "detector": self.detector,
            "wall_time": self.wall_time,
            "config": self.config,
            "extra": {k: clean(v) for k, v in self.extra.items()},
        }
        if self.per_batch_distances is not None:
            d_tr, d_td = self.per_batch_distances
            out["per_batch_distances"] = {"d_tr": list(map(float, d_tr)), "d_td": list(map(float, d_td))}
        return out


# --------------------------------------------------------------------------
# batched distance

def _batch_size(rows: int, n: int, k: Optional[int], name: str) -> int:
    if k is not None:
        if rows != n * k:
            raise SizeMismatch(f"{name} has {rows} rows, expected n*k = {n * k}")
        return k
    if rows % n:
        raise SizeMismatch(f"{name} has {rows} rows, not divisible into {n} batches")
    return rows // n


def _emd_pair(a, b):
    if b.shape[0] == 2 * a.shape[0]:
        a, b = b, a
    return emd_from_cost(cdist(a, b))


def batched_distances(metric: DistanceMetric, tb, rb, db, sigma: Optional[float] = None):
    """Per-batch distances ``(d_TR, d_TD)`` for gathered ``(n, k, m)`` batches."""
    n = len(tb)
    d_tr = np.empty(n)
    d_td = np.empty(n)
    kind = metric.kind
    if kind is MetricKind.EMD:
        for i in range(n):
            d_tr[i] = _emd_pair(tb[i], rb[i])
            d_td[i] = _emd_pair(tb[i], db[i])
    elif kind is MetricKind.MMD:
        for i in range(n):
            stt = cdist(tb[i], tb[i], "sqeuclidean")
            d_tr[i] = mmd_from_sqdist(stt, cdist(rb[i], rb[i], "sqeuclidean"),
                                      cdist(tb[i], rb[i], "sqeuclidean"), sigma)
            d_td[i] = mmd_from_sqdist(stt, cdist(db[i], db[i], "sqeuclidean"),
                                      cdist(tb[i], db[i], "sqeuclidean"), sigma)
    else:
        dims = tb[0].shape[1]
        for i in range(n):
            dtt = cdist(tb[i], tb[i])
            d_tr[i] = kl_from_dist(dtt, cdist(tb[i], rb[i]), dims, metric.kl_k)
            d_td[i] = kl_from_dist(dtt, cdist(tb[i], db[i]), dims, metric.kl_k)
    return d_tr, d_td


def _check_metric_sizes(metric: DistanceMetric, kt: int, kr: int, kd: int):
    if metric.kind is MetricKind.EMD:
        for other, name in ((kr, "reference"), (kd, "detection")):
            if not (other == kt or other == 2 * kt or kt == 2 * other):
                raise SizeMismatch(f"EMD batches must be equal or 2:1, got training {kt} vs {name} {other}")
    elif metric.kind is MetricKind.MMD:
        if min(kt, kr, kd) < 2:
            raise TooFewRows("MMD batches need at least 2 rows")
    elif kt <= metric.kl_k or min(kr, kd) < metric.kl_k:
        raise TooFewRows(f"KL with kl_k={metric.kl_k} needs larger batches")


def resolve_sigma(metric: DistanceMetric, training, reference, seed: int) -> Optional[float]:
    """RBF bandwidth: the configured one, else the median heuristic on training and reference."""
    if metric.kind is not MetricKind.MMD:
        return None
    if metric.mmd_sigma is not None:
        return metric.mmd_sigma
    return median_heuristic_sigma(training, reference, rng=derive_seed(seed, "sigma"))


def bd_detect(triplet: DetectionTriplet, cfg: DetectorConfig, rng: RngLike = None) -> DriftReport:
    """Batched-distance detector.

    Each set is shuffled and split into ``n`` batches; training batch ``i``
    is compared with reference batch ``i`` and detection batch ``i``, and a
    paired t-test on the two distance sequences gives the p-value.
    Reference and detection share one shuffle when their sizes agree, so
    swapping them exactly negates the t statistic.
    """
    if cfg.metric is None:
        raise MetricMissing("BD needs a distance metric")
    start = time.perf_counter()
    seed = as_seed(rng)
    t, r, d = triplet.training, triplet.reference, triplet.detection
    n = cfg.n
    if n < 2:
        raise TooFewRows("BD needs at least 2 batches")
    kt = _batch_size(t.shape[0], n, cfg.k, "training")
    kr = _batch_size(r.shape[0], n, cfg.k, "reference")
    kd = _batch_size(d.shape[0], n, cfg.k, "detection")
    _check_metric_sizes(cfg.metric, kt, kr, kd)

    tb = partition(t, n, kt, derive_seed(seed, "partition", "T", t.shape[0])).apply(t)
    rb = partition(r, n, kr, derive_seed(seed, "partition", "RD", r.shape[0])).apply(r)
    db = partition(d, n, kd, derive_seed(seed, "partition", "RD", d.shape[0])).apply(d)
    sigma = resolve_sigma(cfg.metric, t, r, seed)
    d_tr, d_td = batched_distances(cfg.metric, tb, rb, db, sigma)
    res = paired_t_test(d_tr, d_td)
    extra = {"df": res.df}
    if sigma is not None:
        extra["sigma"] = sigma
    return DriftReport(
        drift_detected=res.p_value < cfg.alpha,
        p_value=res.p_value,
        statistic=res.statistic,
        detector=cfg.name,
        per_batch_distances=(d_tr, d_td),
        wall_time=time.perf_counter() - start,
        config=cfg.to_dict(),
        extra=extra,
    )


# --------------------------------------------------------------------------
# permutation testing

def _pooled_statistic(metric: DistanceMetric, pool: np.ndarray, sigma: Optional[float]):
    """Return ``f(ia, ib)`` computing the distance between two row subsets of ``pool``."""
    kind = metric.kind
    if kind is MetricKind.EMD:
        full = cdist(pool, pool)

        def f(ia, ib):
            if ib.size == 2 * ia.size:
                ia, ib = ib, ia
            return emd_from_cost(full[np.ix_(ia, ib)])
        return f
    if kind is MetricKind.MMD:
        gram = np.exp((-0.5 / (sigma * sigma)) * cdist(pool, pool, "sqeuclidean"))
        diag = np.diag(gram)

        def f(ia, ib):
            na, nb = ia.size, ib.size
            within_a = (gram[np.ix_(ia, ia)].sum() - diag[ia].sum()) / (na * (na - 1))
            within_b = (gram[np.ix_(ib, ib)].sum() - diag[ib].sum()) / (nb * (nb - 1))
            return float(within_a + within_b - 2.0 * gram[np.ix_(ia, ib)].mean())
        return f
    full = cdist(pool, pool)
    dims = pool.shape[1]

    def f(ia, ib):
        return kl_from_dist(full[np.ix_(ia, ia)], full[np.ix_(ia, ib)], dims, metric.kl_k)
    return f


def permutation_detect(triplet: DetectionTriplet, cfg: DetectorConfig, rng: RngLike = None) -> DriftReport:
    """Permutation test of the distance between training+reference and detection.

    Round ``b`` permutes the pooled rows with its own derived seed, so
    rounds are independent of each other and of evaluation order.
    """
    if cfg.metric is None:
        raise MetricMissing("PT needs a distance metric")
    start = time.perf_counter()
    seed = as_seed(rng)
    t, r, d = triplet.training, triplet.reference, triplet.detection
    if cfg.set_size is not None:
        for ds, name in ((t, "training"), (r, "reference"), (d, "detection")):
            if ds.shape[0] != cfg.set_size:
                raise SizeMismatch(f"{name} has {ds.shape[0]} rows, expected {cfg.set_size}")
    na, nb = t.shape[0] + r.shape[0], d.shape[0]
    kind = cfg.metric.kind
    if kind is MetricKind.EMD and not (na == nb or na == 2 * nb or nb == 2 * na):
        raise SizeMismatch("EMD permutation test needs pooled sizes equal or 2:1")
    if kind is MetricKind.MMD and min(na, nb) < 2:
        raise TooFewRows("MMD needs at least 2 rows per side")
    if kind is MetricKind.KL and (na <= cfg.metric.kl_k or nb < cfg.metric.kl_k):
        raise TooFewRows("KL needs more rows than kl_k")

    pool = np.vstack([t, r, d])
    sigma = resolve_sigma(cfg.metric, t, r, seed)
    stat = _pooled_statistic(cfg.metric, pool, sigma)
    total = na + nb
    observed = stat(np.arange(na), np.arange(na, total))
    d_perm = np.empty(cfg.B)
    for b in range(cfg.B):
        perm = make_rng(derive_seed(seed, "perm", b)).permutation(total)
        d_perm[b] = stat(perm[:na], perm[na:])
    p = empirical_p_value(observed, d_perm)
    extra = {"B": cfg.B}
    if sigma is not None:
        extra["sigma"] = sigma
    return DriftReport(
        drift_detected=p < cfg.alpha,
        p_value=p,
        statistic=observed,
        detector=cfg.name,
        wall_time=time.perf_counter() - start,
        config=cfg.to_dict(),
        extra=extra,
    )


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov with Bonferroni correction

def ks_per_dimension(x: np.ndarray, y: np.ndarray):
    """KS statistic and p-value for every column of ``x`` against ``y``."""
    xs = np.sort(np.ascontiguousarray(x.T), axis=1)
    ys = np.sort(np.ascontiguousarray(y.T), axis=1)
    m = xs.shape[0]
    d = np.empty(m)
    p = np.empty(m)
    for i in range(m):
        d[i] = ks_statistic_sorted(xs[i], ys[i])
        p[i] = ks_pvalue(d[i], xs.shape[1], ys.shape[1])
    return d, p


def ks_bc_detect(triplet: DetectionTriplet, alpha: float = 0.05, cfg: Optional[DetectorConfig] = None) -> DriftReport:
    """Per-dimension KS tests of training+reference against detection, Bonferroni-combined.

    The report's ``p_value`` is the Bonferroni-adjusted ``min(1, m * min p)``
    so that ``drift_detected == (p_value < alpha)`` as for the other
    detectors; the raw minimum and its dimension are in ``extra``.
    """
    start = time.perf_counter()
    if cfg is not None:
        alpha = cfg.alpha
        if cfg.set_size is not None:
            for ds, name in ((triplet.training, "training"), (triplet.reference, "reference"),
                             (triplet.detection, "detection")):
                if ds.shape[0] != cfg.set_size:
                    raise SizeMismatch(f"{name} has {ds.shape[0]} rows, expected {cfg.set_size}")
    pooled = np.vstack([triplet.training, triplet.reference])
    d, p = ks_per_dimension(pooled, triplet.detection)
    bc = bonferroni_reject(p, alpha)
    return DriftReport(
        drift_detected=bc.reject,
        p_value=min(1.0, bc.min_p * p.size),
        statistic=float(d.max()),
        detector="KS-BC",
        wall_time=time.perf_counter() - start,
        config=(cfg.to_dict() if cfg is not None else {"method": "ksbc", "alpha": alpha}),
        extra={
            "min_p": bc.min_p,
            "argmin_dim": bc.argmin,
            "threshold": bc.threshold,
            "max_d": float(d.max()),
            "min_d": float(d.min()),
        },
    )


def detect(triplet: DetectionTriplet, cfg: DetectorConfig, rng: RngLike = None) -> DriftReport:
    """Run whichever detector ``cfg.method`` names."""
    if cfg.method is Method.BD:
        return bd_detect(triplet, cfg, rng)
    if cfg.method is Method.PT:
        return permutation_detect(triplet, cfg, rng)
    return ks_bc_detect(triplet, cfg=cfg)


# --------------------------------------------------------------------------
# feature vectors for fusion

class OutputType(str, enum.Enum):
    PVALUES = "pvalues"
    STATISTICS = "statistics"


@dataclass(frozen=True)
class DetectorOutputs:
    """The four detector outputs on one triplet, in both feature flavours."""

    p_values: np.ndarray
    statistics: np.ndarray
    min_d: float
    reports: tuple

    def features(self, output_type, ks_statistic: str = "max") -> np.ndarray:
        if OutputType(output_type) is OutputType.PVALUES:
            return self.p_values.copy()
        out = self.statistics.copy()
        if ks_statistic == "min":
            out[3] = self.min_d
        elif ks_statistic != "max":
            raise ValueError("ks_statistic must be 'max' or 'min'")
        return out


def fusion_configs(n: int = 50, k: int = 100, alpha: float = 0.05, mmd_sigma=None, kl_k: int = 1):
    """The EMD-BD, MMD-BD and KL-BD configurations whose outputs feed fusion."""
    return (
        DetectorConfig(Method.BD, DistanceMetric(MetricKind.EMD), n, k, alpha=alpha),
        DetectorConfig(Method.BD, DistanceMetric(MetricKind.MMD, mmd_sigma=mmd_sigma), n, k, alpha=alpha),
        DetectorConfig(Method.BD, DistanceMetric(MetricKind.KL, kl_k=kl_k), n, k, alpha=alpha),
    )


def detector_outputs(triplet: DetectionTriplet, cfgs=None, rng: RngLike = None,
                     alpha: float = 0.05) -> DetectorOutputs:
    """Run EMD-BD, MMD-BD, KL-BD (sharing one batch partition) and KS-BC.

    ``p_values`` holds the three BD p-values and the smallest
    per-dimension KS p-value; ``statistics`` the three t statistics and the
    largest per-dimension KS distance.
    """
    cfgs = cfgs or fusion_configs(alpha=alpha)
    seed = as_seed(rng)
    reports = [bd_detect(triplet, c, seed) for c in cfgs]
    ks = ks_bc_detect(triplet, alpha=cfgs[0].alpha)
    reports.append(ks)
    p = np.array([r.p_value for r in reports[:3]] + [ks.extra["min_p"]])
    s = np.array([r.statistic for r in reports[:3]] + [ks.extra["max_d"]])
    return DetectorOutputs(p, s, ks.extra["min_d"], tuple(reports))


def detector_feature_vector(triplet: DetectionTriplet, output_type=OutputType.PVALUES, cfgs=None,
                            rng: RngLike = None, ks_statistic: str = "max") -> np.ndarray:
    """Four fusion features for one triplet (see :func:`detector_outputs`)."""
    return detector_outputs(triplet, cfgs, rng).features(output_type, ks_statistic)
