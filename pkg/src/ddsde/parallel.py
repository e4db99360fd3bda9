"""Thread-count handling and order-preserving parallel maps.

Work is always split into the same pieces whatever the thread count, and
partial results are combined in piece order, so results do not depend on
``DDSDE_THREADS``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_VAR = "DDSDE_THREADS"


def thread_count(threads: int | None = None) -> int:
    """Explicit ``threads``, else ``DDSDE_THREADS``, else 1."""
    if threads is not None:
        return max(1, int(threads))
    raw = os.environ.get(ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be an integer, got {raw!r}") from None


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """``[fn(x) for x in items]``, evaluated on up to ``threads`` threads."""
    items = list(items)
    n = thread_count(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
