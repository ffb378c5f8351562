"""Process-pool mapping with a host-sized default worker count."""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor

import psutil

logger = logging.getLogger(__name__)


def default_workers() -> int:
    """Physical core count, falling back to logical cores, then 1."""
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def resolve_workers(threads: int | None = None) -> int:
    """Worker count capped by ``threads`` when given."""
    workers = default_workers()
    if threads is not None:
        workers = max(1, min(workers, threads))
    return workers


def ordered_map(
    function: Callable, tasks: Iterable, workers: int = 1, chunksize: int = 16
) -> list:
    """Apply ``function`` to every task, results in task order."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [function(task) for task in tasks]
    logger.debug("mapping %d tasks over %d processes", len(tasks), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(function, tasks, chunksize=chunksize))
