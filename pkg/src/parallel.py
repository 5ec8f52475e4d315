"""Worker map honouring FDG_THREADS.

numpy/scipy release the GIL inside factorizations, so a thread pool is
enough for per-class and per-run fan-out. Results always come back in
input order, which keeps every parallel section deterministic.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: Optional[int] = None) -> int:
    """Effective worker count; ``None`` reads settings, 0 means auto."""
    if threads is None:
        from src.config import get_settings

        threads = get_settings().threads
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Apply ``fn`` to every item, in order. Exceptions propagate."""
    items = list(items)
    workers = min(resolve_threads(threads), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
