"""Ordered thread-pool map for independent per-image work."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import psutil
import structlog

logger = structlog.get_logger()

T = TypeVar("T")
R = TypeVar("R")


def default_workers() -> int:
    """Physical core count, falling back to logical cores, then 1."""
    try:
        count = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True)
    except Exception:
        count = None
    return max(1, int(count or 1))


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Apply ``fn`` to every item and return results in input order.

    Results never depend on ``workers``: each item is computed from its own
    inputs only and the reduction happens in index order.
    """
    items = list(items)
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("Dispatching work items", items=len(items), workers=workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
