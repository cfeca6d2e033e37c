"""Order-preserving map over independent work units."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_units(fn: Callable[[T], R], units: Sequence[T], jobs: int = 1) -> list[R]:
    """``[fn(u) for u in units]``, optionally spread over ``jobs`` processes.

    Every unit carries its own RNG seed, so results do not depend on ``jobs``.
    """
    if jobs <= 1 or len(units) <= 1:
        return [fn(u) for u in units]
    chunk = max(1, len(units) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, units, chunksize=chunk))
