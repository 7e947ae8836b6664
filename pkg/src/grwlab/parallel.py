"""Deterministic fan-out of independent work items."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("GRW_LAB_JOBS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Iterable, jobs: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally across processes; order is preserved."""
    items = list(items)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))
