"""Worker-pool helper; ``GAZELAB_THREADS`` caps the number of threads."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    n = os.cpu_count() or 1
    cap = os.environ.get("GAZELAB_THREADS")
    if cap:
        try:
            n = min(n, max(int(cap), 1))
        except ValueError:
            pass
    return n


def pmap(fn, items) -> list:
    """Ordered map over ``items``; threads only when more than one worker is allowed."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
