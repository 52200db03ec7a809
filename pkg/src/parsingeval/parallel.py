"""Ordered worker-pool map used by the per-image pipelines."""

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    return os.cpu_count() or 1


def pmap(fn, items, threads: int = 1):
    """``list(map(fn, items))``, optionally on a thread pool; result order is input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
