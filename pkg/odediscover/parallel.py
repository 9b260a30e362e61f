"""
Replication scheduling.

Tasks are split into batches and each batch runs in one worker process, so a
worker pays process start-up and module import once per batch instead of once
per replication. Results come back in task order regardless of which batch
finished first.

Usage:
    from odediscover.parallel import run_tasks
    results = run_tasks(run_replication, tasks, threads=4, desc="duffing_ps2")
"""

import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any, Callable, List, Optional, Sequence, TypeVar

from tqdm import tqdm

from .errors import ConfigError
from .run_logger import RunLogger

logger = RunLogger("parallel")

THREADS_ENV = "ODEDISCOVER_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit value, else $ODEDISCOVER_THREADS, else the machine's core count."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV)
        if raw:
            try:
                threads = int(raw)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be an integer, got '{raw}'") from None
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads


def create_batches(tasks: Sequence[T], batch_size: int) -> List[List[T]]:
    """Split tasks into consecutive batches of at most batch_size."""
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    return [list(tasks[i:i + batch_size]) for i in range(0, len(tasks), batch_size)]


def _run_batch(func: Callable[[T], R], batch: List[T]) -> List[R]:
    return [func(task) for task in batch]


def run_tasks(func: Callable[[T], R], tasks: Sequence[T], threads: Optional[int] = None,
              batch_size: Optional[int] = None, desc: str = "replications",
              progress: bool = False) -> List[R]:
    """Apply func to every task, in worker processes when more than one thread is allowed.

    func must be a module-level callable so it can be sent to workers.
    """
    tasks = list(tasks)
    if not tasks:
        return []
    threads = min(resolve_threads(threads), len(tasks))
    logger.info("Running tasks", data={"tasks": len(tasks), "threads": threads, "desc": desc})

    if threads == 1:
        iterator = tqdm(tasks, desc=desc, disable=not progress, leave=False)
        return [func(task) for task in iterator]

    if batch_size is None:
        # a few batches per worker keeps the pool busy near the end
        batch_size = max(1, len(tasks) // (4 * threads))
    batches = create_batches(tasks, batch_size)

    results: List[Any] = [None] * len(batches)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(_run_batch, func, batch): index for index, batch in enumerate(batches)}
        with tqdm(total=len(tasks), desc=desc, disable=not progress, leave=False) as bar:
            for future in as_completed(futures):
                index = futures[future]
                results[index] = future.result()
                bar.update(len(batches[index]))

    return [item for batch_results in results for item in batch_results]
