"""Hypothesis-testing primitives used by the detectors."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import betainc

from .errors import EmptyPermutations, EmptySample, LengthMismatch, TooFewSamples

KS_SERIES_TOL = 1e-10


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: Optional[float] = None


def student_t_two_tailed_p(t, df):
    """Two-tailed Student-t tail probability ``2 * P(T >= |t|)``.

    Evaluated as the regularised incomplete beta ``I_x(df/2, 1/2)`` with
    ``x = df / (df + t^2)``.  Accepts scalars or arrays.
    """
    t = np.asarray(t, dtype=float)
    df = np.asarray(df, dtype=float)
    if np.any(df <= 0):
        raise ValueError("df must be positive")
    with np.errstate(over="ignore"):
        x = df / (df + t * t)
    p = np.clip(betainc(df / 2.0, 0.5, x), 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def paired_t_test(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Paired two-tailed t-test of H0: mean(x - y) = 0.

    When every difference is identical the statistic is undefined; the
    result is ``p = 1`` for a zero mean difference and ``p = 0`` otherwise
    (statistic reported as 0 or a signed infinity).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"paired samples need equal 1-D lengths, got {x.shape} and {y.shape}")
    n = x.size
    if n < 2:
        raise TooFewSamples("paired t-test needs at least 2 pairs")
    delta = x - y
    mean = delta.mean()
    sd = delta.std(ddof=1)
    df = float(n - 1)
    if sd == 0.0:
        if mean == 0.0:
            return TestResult(0.0, 1.0, df)
        return TestResult(math.copysign(math.inf, mean), 0.0, df)
    t = float(mean / (sd / math.sqrt(n)))
    return TestResult(t, student_t_two_tailed_p(t, df), df)


def kolmogorov_q(lam: float) -> float:
    """Kolmogorov survival function ``Q(lam) = P(K > lam)``.

    Large ``lam`` uses the alternating series
    ``2 * sum (-1)^(j-1) exp(-2 j^2 lam^2)``; below 1 it uses the
    equivalent theta-function form of ``1 - Q`` which converges quickly
    there.  Both stop once a term drops under 1e-10.
    """
    if lam <= 0.0:
        return 1.0
    if lam < 1.0:
        c = math.sqrt(2.0 * math.pi) / lam
        a = -(math.pi ** 2) / (8.0 * lam * lam)
        total = 0.0
        j = 1
        while True:
            term = c * math.exp(a * (2 * j - 1) ** 2)
            total += term
            if term < KS_SERIES_TOL:
                break
            j += 1
        return min(1.0, max(0.0, 1.0 - total))
    total = 0.0
    sign = 1.0
    j = 1
    a = -2.0 * lam * lam
    while True:
        term = 2.0 * math.exp(a * j * j)
        total += sign * term
        if term < KS_SERIES_TOL:
            break
        sign = -sign
        j += 1
    return min(1.0, max(0.0, total))


def ks_pvalue(d: float, nx: int, ny: int) -> float:
    """Asymptotic two-sample KS p-value with the usual finite-size correction."""
    ne = nx * ny / (nx + ny)
    sq = math.sqrt(ne)
    return kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)


def ks_statistic_sorted(xs: np.ndarray, ys: np.ndarray) -> float:
    """Sup-distance between the ECDFs of two already sorted samples."""
    grid = np.concatenate([xs, ys])
    fx = np.searchsorted(xs, grid, side="right") / xs.size
    fy = np.searchsorted(ys, grid, side="right") / ys.size
    return float(np.abs(fx - fy).max())


def ks_two_sample(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test with asymptotic p-value."""
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    ys = np.sort(np.asarray(y, dtype=float).ravel())
    if xs.size == 0 or ys.size == 0:
        raise EmptySample("KS test needs two non-empty samples")
    d = ks_statistic_sorted(xs, ys)
    return TestResult(d, ks_pvalue(d, xs.size, ys.size))


class BonferroniResult(NamedTuple):
    reject: bool
    threshold: float
    min_p: float
    argmin: int


def bonferroni_reject(p_values: Sequence[float], alpha: float) -> BonferroniResult:
    """Reject the global null iff ``min(p) < alpha / len(p)``."""
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        raise EmptySample("no p-values given")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    threshold = alpha / p.size
    i = int(np.argmin(p))
    return BonferroniResult(bool(p[i] < threshold), threshold, float(p[i]), i)


def empirical_p_value(d: float, d_perm: Sequence[float]) -> float:
    """Fraction of permutation statistics at least as large as ``d`` in absolute value."""
    d_perm = np.asarray(d_perm, dtype=float).ravel()
    if d_perm.size == 0:
        raise EmptyPermutations("need at least one permutation statistic")
    return float(np.mean(np.abs(d_perm) >= abs(d)))
