"""Rank statistics for racing: Friedman omnibus test, rank-based post-hoc
comparison against the incumbent, and the sign test used when only two
configurations are left. Lower performance values are better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .errors import InsufficientDataError


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    degrees_of_freedom: int
    p_value: float
    mean_ranks: tuple[float, ...]
    rank_sums: tuple[float, ...]
    alpha: float = 0.05

    @property
    def rejected(self) -> bool:
        return self.p_value < self.alpha


def _matrix(perf: Sequence[Sequence[float]]) -> np.ndarray:
    m = np.asarray(perf, dtype=float)
    if m.ndim != 2:
        raise InsufficientDataError("performance data must be a blocks x configurations matrix")
    b, k = m.shape
    if b < 2 or k < 2:
        raise InsufficientDataError(f"need at least 2 blocks and 2 configurations, got {b}x{k}")
    if np.isnan(m).any():
        raise InsufficientDataError("performance matrix has missing entries")
    return m


def block_ranks(perf: Sequence[Sequence[float]]) -> np.ndarray:
    """Rank configurations within each block, best (lowest) = 1, ties averaged."""
    return sps.rankdata(np.asarray(perf, dtype=float), method="average", axis=1)


def friedman(perf: Sequence[Sequence[float]], alpha: float = 0.05) -> FriedmanResult:
    m = _matrix(perf)
    b, k = m.shape
    ranks = block_ranks(m)
    sums = ranks.sum(axis=0)
    statistic = 12.0 / (b * k * (k + 1)) * float(np.sum(sums ** 2)) - 3.0 * b * (k + 1)
    statistic = max(statistic, 0.0)
    p_value = float(sps.chi2.sf(statistic, k - 1))
    return FriedmanResult(
        statistic=statistic,
        degrees_of_freedom=k - 1,
        p_value=min(max(p_value, 0.0), 1.0),
        mean_ranks=tuple(float(s) / b for s in sums),
        rank_sums=tuple(float(s) for s in sums),
        alpha=alpha,
    )


def posthoc_eliminate(perf: Sequence[Sequence[float]], alpha: float) -> list[int]:
    """Columns that survive a rank-sum comparison against the best configuration.

    A column j is dropped when
    ``(R_j - R_best) / sqrt(2b (1 - T/(b(k-1))) (A - C) / ((b-1)(k-1)))``
    exceeds the ``1 - alpha/2`` quantile of Student's t with ``(b-1)(k-1)``
    degrees of freedom, where T is the Friedman statistic, A the sum of squared
    ranks and C = b k (k+1)^2 / 4.
    """
    m = _matrix(perf)
    b, k = m.shape
    ranks = block_ranks(m)
    sums = ranks.sum(axis=0)
    fr = friedman(m, alpha)
    best = int(np.argmin(sums))
    a = float(np.sum(ranks ** 2))
    c = b * k * (k + 1) ** 2 / 4.0
    agreement = max(1.0 - fr.statistic / (b * (k - 1)), 0.0)
    scale = math.sqrt(max(2.0 * b * agreement * (a - c) / ((b - 1) * (k - 1)), 0.0))
    critical = float(sps.t.ppf(1.0 - alpha / 2.0, (b - 1) * (k - 1)))
    survivors = []
    for j in range(k):
        diff = float(sums[j] - sums[best])
        if j == best or diff <= 0:
            survivors.append(j)
        elif scale == 0.0:
            # perfect agreement across blocks: any positive gap is decisive
            continue
        elif diff / scale <= critical:
            survivors.append(j)
    return survivors


def sign_test(perf: Sequence[Sequence[float]]) -> tuple[float, int]:
    """Two-sided sign test on a two-column matrix; returns (p, loser column or -1)."""
    m = np.asarray(perf, dtype=float)
    wins = int(np.sum(m[:, 0] < m[:, 1]))
    losses = int(np.sum(m[:, 0] > m[:, 1]))
    n = wins + losses
    if n == 0:
        return 1.0, -1
    tail = sum(math.comb(n, i) for i in range(min(wins, losses) + 1)) / 2 ** n
    p = min(1.0, 2.0 * tail)
    loser = -1 if wins == losses else (1 if wins > losses else 0)
    return p, loser


def race_survivors(perf: Sequence[Sequence[float]], alpha: float) -> list[int]:
    """One elimination step over the columns of ``perf``; returns surviving columns."""
    m = _matrix(perf)
    k = m.shape[1]
    if k == 2:
        p, loser = sign_test(m)
        if loser >= 0 and p < alpha:
            return [1 - loser]
        return [0, 1]
    if not friedman(m, alpha).rejected:
        return list(range(k))
    return posthoc_eliminate(m, alpha)
