"""Ordered map over a bounded thread pool (capped by NLSLAB_THREADS)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("NLSLAB_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items, max_workers: int | None = None) -> list:
    items = list(items)
    workers = min(thread_cap() if max_workers is None else max_workers, len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
