"""Replica-level worker pool.

Results are returned in item order and every random draw is keyed by
position, never by scheduling, so any thread count produces identical
output.
"""

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["thread_count", "parallel_map"]


def thread_count(requested=None):
    """Resolve a worker count: explicit value, else CASCADE_THREADS, else 1."""
    if requested is None:
        env = os.environ.get("CASCADE_THREADS", "").strip()
        requested = int(env) if env else 1
    requested = int(requested)
    if requested < 1:
        raise ValueError("thread count must be >= 1")
    return requested


def parallel_map(fn, items, threads=1):
    """fn over items with results in item order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
