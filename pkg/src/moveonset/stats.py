"""Nonparametric tests: Friedman, Wilcoxon signed-rank, Bonferroni."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm, rankdata

EXACT_WILCOXON_MAX_N = 20


class StatsError(Exception):
    pass


@dataclass(frozen=True)
class StatTestResult:
    kind: str
    statistic: float
    p_value: float
    n: int
    flagged: bool = False


def friedman_test(score_matrix: np.ndarray) -> StatTestResult:
    """Friedman chi-square over rows = subjects, columns = conditions."""
    m = np.asarray(score_matrix, dtype=np.float64)
    if m.ndim != 2:
        raise StatsError("score matrix must be 2-D")
    n, k = m.shape
    if k < 3 or n < 2:
        raise StatsError("need >= 3 conditions and >= 2 rows")
    ranks = np.apply_along_axis(rankdata, 1, m)  # average ranks on ties
    col_sums = ranks.sum(axis=0)
    stat = 12.0 / (n * k * (k + 1)) * float((col_sums ** 2).sum()) - 3.0 * n * (k + 1)
    stat = max(stat, 0.0)
    p = float(chi2.sf(stat, df=k - 1))
    return StatTestResult(kind="friedman", statistic=stat, p_value=min(p, 1.0), n=n)


def _wplus_distribution(ranks2: np.ndarray) -> np.ndarray:
    """Counts of the positive-rank sum over all sign assignments.

    ranks2 are ranks doubled to integers (ties give half-integer ranks).
    Entry s of the result counts assignments with doubled rank sum s.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(a, b) -> StatTestResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StatsError("inputs must be equal-length 1-D arrays")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return StatTestResult(kind="wilcoxon", statistic=0.0, p_value=1.0,
                              n=0, flagged=True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if n <= EXACT_WILCOXON_MAX_N:
        ranks2 = np.round(ranks * 2).astype(np.int64)
        counts = _wplus_distribution(ranks2)
        total = int(ranks2.sum())
        w2 = int(round(w * 2))
        # two-sided: both tails of the W+ distribution at the min rank sum
        p = (counts[:w2 + 1].sum() + counts[total - w2:].sum()) / counts.sum()
        p = float(min(p, 1.0))
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(((tie_counts ** 3 - tie_counts)).sum()) / 48.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        z = (w_plus - mean) / np.sqrt(var)
        p = float(min(2.0 * norm.sf(abs(z)), 1.0))
    return StatTestResult(kind="wilcoxon", statistic=w, p_value=p, n=n)


def bonferroni(p_values, m: int) -> list[float]:
    p_values = list(p_values)
    if m < len(p_values):
        raise StatsError("m must cover the number of comparisons")
    return [min(1.0, float(p) * m) for p in p_values]
