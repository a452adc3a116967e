"""Order-preserving map over worker processes.

Workers are forked, so the mapped callable and any data it closes over are
inherited rather than pickled; only task arguments and results cross the
process boundary. Results come back in input order regardless of scheduling.
"""

from __future__ import annotations

import multiprocessing as mp
import os
from typing import Callable, Iterable, Sequence

_func: Callable | None = None


def _install(func):
    global _func
    _func = func


def _call(item):
    return _func(item)


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("ITREVAL_THREADS", "1") or 1)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def ordered_map(func: Callable, items: Iterable, threads: int | None = 1) -> list:
    items: Sequence = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [func(x) for x in items]
    ctx = mp.get_context("fork")
    chunk = max(1, len(items) // (threads * 8))
    with ctx.Pool(min(threads, len(items)), initializer=_install, initargs=(func,)) as pool:
        return pool.map(_call, items, chunksize=chunk)
