"""Seeded random streams and an order-preserving parallel map.

Every stochastic routine splits its work into fixed-size chunks and gives
chunk ``j`` the generator ``stream(seed, key, j)``. Because chunk layout
never depends on the worker count, results are bit-identical whether they
run serially or in a process pool.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_CHUNK = 20_000


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``."""
    if seed is None or int(seed) < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(seed)


def chunk_sizes(total: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    total = int(total)
    if total < 1:
        raise ValueError("replicate count must be at least 1")
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def parallel_map(func: Callable, tasks: Sequence, workers: int = 1) -> list:
    """``[func(t) for t in tasks]``, optionally in a process pool.

    Results come back in task order so reductions stay deterministic.
    """
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(func, tasks))


def ordered_sum(parts: Iterable[np.ndarray]) -> np.ndarray:
    total = None
    for p in parts:
        total = np.array(p, dtype=float) if total is None else total + p
    return total
