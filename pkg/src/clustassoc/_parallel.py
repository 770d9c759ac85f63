"""Deterministic parallel map over independent work units.

Results are collected in submission order, so the reduction downstream is
identical for any worker count (each task derives its own random stream).
Falls back to the serial path if a process pool cannot be created.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def effective_threads(threads) -> int:
    if threads is None:
        return os.cpu_count() or 1
    return max(1, int(threads))


def parallel_map(fn, items, threads=1):
    items = list(items)
    n = effective_threads(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    try:
        with ProcessPoolExecutor(max_workers=min(n, len(items))) as pool:
            chunk = max(1, len(items) // (n * 8))
            return list(pool.map(fn, items, chunksize=chunk))
    except (OSError, PermissionError):
        return [fn(item) for item in items]
