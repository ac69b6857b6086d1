from __future__ import annotations

from multiprocessing import Pool
from typing import Callable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def chunked(items: Sequence[T], size: int) -> List[Sequence[T]]:
    return [items[start : start + size] for start in range(0, len(items), size)]


def ordered_map(
    func: Callable[[Sequence[T]], List[R]],
    items: Sequence[T],
    jobs: int,
    chunk_size: int,
) -> List[R]:
    """Apply a batch function over chunks, concatenating results in input order.

    ``func`` must be picklable (a module-level function or a ``functools.partial``
    of one) when ``jobs > 1``.
    """
    if jobs <= 1 or len(items) <= chunk_size:
        return list(func(items))
    results: List[R] = []
    with Pool(min(jobs, max(1, -(-len(items) // chunk_size)))) as pool:
        for part in pool.imap(func, chunked(items, chunk_size)):
            results.extend(part)
    return results
