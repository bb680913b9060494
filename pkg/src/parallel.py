"""
Index-ordered parallel map over a thread pool.

Work items are identified by their index; every task derives its own random
stream from that index, and results come back in index order, so the outcome
does not depend on the number of workers.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

T = TypeVar("T")


def indexed_map(fn: Callable[[int], T], n: int, jobs: int = 1) -> List[T]:
    """Evaluate fn(0), ..., fn(n - 1) with at most ``jobs`` workers."""
    if jobs <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=min(jobs, n)) as pool:
        futures = [pool.submit(fn, i) for i in range(n)]
        return [f.result() for f in futures]
