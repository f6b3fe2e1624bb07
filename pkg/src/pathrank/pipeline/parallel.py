"""Order-preserving map over a process pool."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import TYPE_CHECKING


if TYPE_CHECKING:
    from collections.abc import Callable, Sequence


logger = logging.getLogger("pathrank")


def parallel_map[T, R](fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """Apply `fn` to every item, results in input order.

    `jobs == 1` runs inline; otherwise `fn` and the items must be picklable.
    """
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    if jobs == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    workers = min(jobs, len(items))
    logger.info("Running %d tasks on %d workers", len(items), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
