"""Ordered thread-pool map; results never depend on the thread count."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def ordered_map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
