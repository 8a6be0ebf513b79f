"""Sample-to-sample distances: earth mover's distance, MMD and k-NN KL.

Each distance has a public entry point working on raw samples plus a
``*_from_*`` helper that works on precomputed distance matrices, which the
detectors use to avoid recomputing pairwise distances.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist, pdist

from .core import RngLike, as_dataset, check_same_dims, make_rng
from .errors import DegenerateData, SizeMismatch, TooFewRows

KL_RADIUS_FLOOR = 1e-12
MEDIAN_MAX_ROWS = 2000


class MetricKind(str, enum.Enum):
    EMD = "emd"
    MMD = "mmd"
    KL = "kl"


@dataclass(frozen=True)
class DistanceMetric:
    """Which distance to use, with its tuning knobs.

    ``mmd_sigma=None`` means the RBF bandwidth is chosen per detection by
    :func:`median_heuristic_sigma`.
    """

    kind: MetricKind
    mmd_sigma: Optional[float] = None
    kl_k: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if self.mmd_sigma is not None and not self.mmd_sigma > 0:
            raise ValueError("mmd_sigma must be positive")
        if self.kl_k < 1:
            raise ValueError("kl_k must be >= 1")

    def compute(self, a, b, sigma: Optional[float] = None) -> float:
        if self.kind is MetricKind.EMD:
            return wasserstein(a, b)
        if self.kind is MetricKind.MMD:
            s = sigma or self.mmd_sigma
            if s is None:
                s = median_heuristic_sigma(a, b)
            return mmd_u_statistic(a, b, s)
        return kl_knn_estimate(a, b, self.kl_k)


def _pair(a, b):
    a = as_dataset(a, "a")
    b = as_dataset(b, "b")
    check_same_dims(a, b)
    return a, b


def cost_matrix(a, b) -> np.ndarray:
    """Euclidean distances between every row of ``a`` and every row of ``b``."""
    a, b = _pair(a, b)
    return cdist(a, b)


# --------------------------------------------------------------------------
# earth mover's distance

def emd_from_cost(cost: np.ndarray) -> float:
    """W1 between uniform measures on the rows and columns of ``cost``.

    Square matrices are an assignment problem.  A ``2r x r`` matrix is
    balanced by splitting each column into two half-mass copies.
    """
    r, c = cost.shape
    if r == 2 * c:
        cost = np.repeat(cost, 2, axis=1)
    elif r != c:
        raise SizeMismatch(f"unsupported support sizes {r} and {c}")
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / cost.shape[0])


def emd(a, b) -> float:
    """Exact Wasserstein-1 distance between two equal-size samples."""
    a, b = _pair(a, b)
    if a.shape[0] != b.shape[0]:
        raise SizeMismatch(f"emd needs equal sizes, got {a.shape[0]} and {b.shape[0]}")
    return emd_from_cost(cdist(a, b))


def emd_unbalanced_uniform(a, b) -> float:
    """Exact Wasserstein-1 when ``a`` has exactly twice as many rows as ``b``."""
    a, b = _pair(a, b)
    if a.shape[0] != 2 * b.shape[0]:
        raise SizeMismatch(f"need rows(a) == 2 * rows(b), got {a.shape[0]} and {b.shape[0]}")
    return emd_from_cost(cdist(a, b))


def wasserstein(a, b) -> float:
    """Dispatch to the balanced or the 2:1 solver (either orientation)."""
    a, b = _pair(a, b)
    if b.shape[0] == 2 * a.shape[0]:
        a, b = b, a
    return emd_from_cost(cdist(a, b))


# --------------------------------------------------------------------------
# maximum mean discrepancy

def mmd_from_sqdist(saa: np.ndarray, sbb: np.ndarray, sab: np.ndarray, sigma: float) -> float:
    """Unbiased MMD^2 from squared-distance blocks, RBF kernel of bandwidth ``sigma``."""
    scale = -0.5 / (sigma * sigma)
    na, nb = saa.shape[0], sbb.shape[0]
    kaa = np.exp(scale * saa)
    kbb = np.exp(scale * sbb)
    kab = np.exp(scale * sab)
    within_a = (kaa.sum() - np.trace(kaa)) / (na * (na - 1))
    within_b = (kbb.sum() - np.trace(kbb)) / (nb * (nb - 1))
    return float(within_a + within_b - 2.0 * kab.mean())


def mmd_u_statistic(a, b, sigma: float) -> float:
    """Unbiased U-statistic estimate of MMD^2; may be negative.

    Within-sample terms average the off-diagonal kernel entries of each
    sample using its own size, so unequal sizes are allowed.
    """
    a, b = _pair(a, b)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise TooFewRows("mmd needs at least 2 rows per sample")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return mmd_from_sqdist(
        cdist(a, a, "sqeuclidean"), cdist(b, b, "sqeuclidean"), cdist(a, b, "sqeuclidean"), sigma
    )


def median_heuristic_sigma(a, b=None, rng: RngLike = 0, max_rows: int = MEDIAN_MAX_ROWS) -> float:
    """Median pairwise Euclidean distance over the pooled rows.

    Pools larger than ``max_rows`` are subsampled without replacement using
    ``rng``.  A zero median falls back to the smallest positive distance.
    """
    pooled = as_dataset(a, "a")
    if b is not None:
        b = as_dataset(b, "b")
        check_same_dims(pooled, b)
        pooled = np.vstack([pooled, b])
    if pooled.shape[0] < 2:
        raise TooFewRows("median heuristic needs at least 2 rows")
    if pooled.shape[0] > max_rows:
        idx = make_rng(rng).choice(pooled.shape[0], size=max_rows, replace=False)
        pooled = pooled[np.sort(idx)]
    d = pdist(pooled)
    med = float(np.median(d))
    if med > 0:
        return med
    positive = d[d > 0]
    if positive.size == 0:
        raise DegenerateData("all points are identical")
    return float(positive.min())


# --------------------------------------------------------------------------
# k-NN Kullback-Leibler

def kl_from_dist(daa: np.ndarray, dab: np.ndarray, dims: int, k_nn: int = 1) -> float:
    """k-NN divergence estimate of KL(P_a || P_b) from distance blocks.

    ``daa`` is the full within-``a`` matrix (its diagonal is ignored) and
    ``dab`` the ``a``-to-``b`` matrix.
    """
    na, nb = dab.shape
    within = daa.copy()
    np.fill_diagonal(within, np.inf)
    rho = np.partition(within, k_nn - 1, axis=1)[:, k_nn - 1]
    nu = np.partition(dab, k_nn - 1, axis=1)[:, k_nn - 1]
    rho = np.maximum(rho, KL_RADIUS_FLOOR)
    nu = np.maximum(nu, KL_RADIUS_FLOOR)
    return float(dims / na * np.log(nu / rho).sum() + np.log(nb / (na - 1)))


def _kth_radii(a, b, k_nn, exclude_self, chunk=1024):
    out = np.empty(a.shape[0])
    for lo in range(0, a.shape[0], chunk):
        d = cdist(a[lo:lo + chunk], b)
        if exclude_self:
            rows = np.arange(d.shape[0])
            d[rows, lo + rows] = np.inf
        out[lo:lo + chunk] = np.partition(d, k_nn - 1, axis=1)[:, k_nn - 1]
    return out


def kl_knn_estimate(a, b, k_nn: int = 1) -> float:
    """k-nearest-neighbour estimate of KL(P_a || P_b); not symmetric.

    ``(m / n_a) * sum log(nu_i / rho_i) + log(n_b / (n_a - 1))`` where
    ``rho_i`` is the distance from ``a_i`` to its ``k_nn``-th neighbour in
    ``a`` (itself excluded) and ``nu_i`` the same in ``b``.  Radii are
    floored at 1e-12 so duplicated points stay finite.
    """
    a, b = _pair(a, b)
    if k_nn < 1:
        raise ValueError("k_nn must be >= 1")
    if a.shape[0] <= k_nn or b.shape[0] < k_nn:
        raise TooFewRows(f"k_nn={k_nn} needs rows(a) > k_nn and rows(b) >= k_nn")
    rho = np.maximum(_kth_radii(a, a, k_nn, True), KL_RADIUS_FLOOR)
    nu = np.maximum(_kth_radii(a, b, k_nn, False), KL_RADIUS_FLOOR)
    na, nb = a.shape[0], b.shape[0]
    return float(a.shape[1] / na * np.log(nu / rho).sum() + np.log(nb / (na - 1)))
