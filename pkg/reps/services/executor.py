"""
Shared thread pool for the data-parallel stages: distance-matrix row
blocks, cross-validation folds and beta sweep points.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, List, Optional, Sequence, Tuple

from reps.services.settings import get_thread_count

logger = logging.getLogger(__name__)

_EXECUTOR: Optional[ThreadPoolExecutor] = None
_EXECUTOR_WORKERS = 0
_EXECUTOR_LOCK = threading.Lock()

# Set inside pool threads; nested run_concurrent calls run inline
_worker_state = threading.local()

Task = Tuple[Callable[..., Any], tuple, dict]


def get_executor() -> ThreadPoolExecutor:
    """Get or create the thread pool (resized if REPS_THREADS changed)."""
    global _EXECUTOR, _EXECUTOR_WORKERS
    workers = get_thread_count()
    with _EXECUTOR_LOCK:
        if _EXECUTOR is None or workers != _EXECUTOR_WORKERS:
            if _EXECUTOR is not None:
                _EXECUTOR.shutdown(wait=True)
            _EXECUTOR = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="reps")
            _EXECUTOR_WORKERS = workers
            logger.debug(f"Thread pool started with {workers} workers")
        return _EXECUTOR


def in_worker() -> bool:
    return getattr(_worker_state, "active", False)


def _run_in_worker(func: Callable[..., Any], args: tuple, kwargs: dict) -> Any:
    _worker_state.active = True
    try:
        return func(*args, **kwargs)
    finally:
        _worker_state.active = False


def run_sequential(tasks: Sequence[Task]) -> List[Any]:
    """Execute tasks one after another, results in task order."""
    return [func(*args, **kwargs) for func, args, kwargs in tasks]


def run_concurrent(tasks: Sequence[Task]) -> List[Any]:
    """
    Execute tasks on the shared pool.

    Args:
        tasks: List of tuples (func, args, kwargs) to execute

    Returns:
        List of results in the same order as tasks. The first exception
        raised by any task is re-raised after all tasks finish.
    """
    if len(tasks) <= 1 or in_worker() or get_thread_count() == 1:
        return run_sequential(tasks)

    executor = get_executor()
    results: List[Any] = [None] * len(tasks)
    futures = {}
    for i, (func, args, kwargs) in enumerate(tasks):
        futures[executor.submit(_run_in_worker, func, args, kwargs)] = i

    first_error: Optional[BaseException] = None
    first_error_idx = len(tasks)
    for future in as_completed(futures):
        idx = futures[future]
        try:
            results[idx] = future.result()
        except Exception as e:
            # report the lowest-index failure so errors are reproducible
            if idx < first_error_idx:
                first_error, first_error_idx = e, idx
    if first_error is not None:
        logger.debug(f"Concurrent task {first_error_idx} failed: {first_error}")
        raise first_error
    return results


def close_executor() -> None:
    """Shut the pool down (call on exit)."""
    global _EXECUTOR, _EXECUTOR_WORKERS
    with _EXECUTOR_LOCK:
        if _EXECUTOR is not None:
            _EXECUTOR.shutdown(wait=False)
            _EXECUTOR = None
            _EXECUTOR_WORKERS = 0
