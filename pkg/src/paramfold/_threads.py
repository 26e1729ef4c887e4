"""Parallelism cap shared by curve emission and bound sweeps.

PARAMFOLD_THREADS caps the worker count; 0 or unset means auto (cpu count).
A cap of 1 disables thread pools entirely, which keeps single-shot CLI runs
free of pool startup cost.
"""

from __future__ import annotations

import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

_T = TypeVar("_T")
_S = TypeVar("_S")

ENV_VAR = "PARAMFOLD_THREADS"


def max_workers() -> int:
    raw = os.environ.get(ENV_VAR, "0").strip()
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        return os.cpu_count() or 1
    return n


def parallel_map(fn: Callable[[_S], _T], items: Sequence[_S]) -> list[_T]:
    """Map preserving order; threads only when allowed and worthwhile."""
    workers = min(max_workers(), len(items))
    if workers <= 1 or len(items) < 4:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
