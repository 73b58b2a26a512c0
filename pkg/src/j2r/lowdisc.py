"""Hammersley point sets.

Point ``i`` of an ``n``-point, ``k``-dimensional set is
``(i/n, phi_2(i), phi_3(i), phi_5(i), ...)`` where ``phi_b`` is the base-``b``
radical inverse. Indexing starts at 0, so the first point is the lower corner
of the box; coordinates lie in [0, 1) and the upper bound of a box is never
sampled exactly.
"""

from __future__ import annotations

import functools
from typing import Sequence


def radical_inverse(i: int, base: int) -> float:
    """Mirror the base-``base`` digits of ``i`` about the radix point."""
    if i < 0 or base < 2:
        raise ValueError("radical_inverse needs i >= 0 and base >= 2")
    # accumulate as an integer fraction num/den so the result is exact until the final division
    num, den = 0, 1
    while i:
        i, digit = divmod(i, base)
        num = num * base + digit
        den *= base
    return num / den


@functools.lru_cache(maxsize=None)
def first_primes(count: int) -> tuple[int, ...]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return tuple(primes)


def hammersley_point(i: int, n: int, k: int) -> tuple[float, ...]:
    if not 0 <= i < n:
        raise ValueError(f"point index {i} out of range for {n} points")
    if k < 1:
        raise ValueError("a Hammersley point needs at least one dimension")
    primes = first_primes(k - 1)
    return (i / n, *(radical_inverse(i, p) for p in primes))


def hammersley_set(n: int, k: int) -> list[tuple[float, ...]]:
    return [hammersley_point(i, n, k) for i in range(n)]


def scale_point(point: Sequence[float], box: Sequence[tuple[float, float]]) -> list[float]:
    if len(point) != len(box):
        raise ValueError(f"point has {len(point)} coordinates but the box has {len(box)} dimensions")
    return [lo + p * (hi - lo) for p, (lo, hi) in zip(point, box)]
