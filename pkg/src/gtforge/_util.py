"""Small shared helpers: worker-count control, deterministic RNG streams,
fixed-width float formatting for serialized output."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

THREADS_ENV_VAR = "GT_FORGE_THREADS"

T = TypeVar("T")


def worker_count() -> int:
    """Worker cap from the GT_FORGE_THREADS environment variable (default 1).

    Outputs never depend on this value; it only limits concurrency.
    """
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")
    if value < 1:
        raise ValueError(f"{THREADS_ENV_VAR} must be >= 1, got {value}")
    return value


def derived_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent deterministic stream for (seed, stream).

    The pair seeds the generator's entropy pool, so distinct stream ids give
    statistically independent sequences and the same pair always reproduces
    the same sequence.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(stream))))


def ordered_map(fn: Callable[[T], object], items: Sequence[T]) -> list:
    """Map fn over items, possibly in parallel, preserving item order.

    Results are identical to a sequential loop regardless of worker count:
    work units are fixed by the caller and outputs are collected by index.
    """
    workers = min(worker_count(), len(items)) if items else 1
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def fmt_float(value: float) -> str:
    """Format a float with 9 significant digits for serialized records."""
    if value != value:
        raise ValueError("cannot serialize NaN")
    return f"{value:.9g}"
