"""Shared plumbing: seeded RNG streams, deterministic parallel map, CSV output."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def child_rng(*keys: int) -> np.random.Generator:
    """Generator keyed by an integer path, e.g. (master_seed, replicate).

    Deriving per-task generators from the key path (rather than sharing one
    stream) keeps results identical no matter how tasks are scheduled.
    """
    for k in keys:
        if k < 0:
            raise ValueError("rng keys must be non-negative integers")
    return np.random.default_rng(list(keys))


def pmap(fn, items, threads: int = 1) -> list:
    """Map fn over items, optionally on a thread pool.

    Results come back in item order, so the reduction is independent of
    scheduling; each fn must derive its own randomness from its item.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def fmt(x) -> str:
    """Shortest round-trip decimal for a float; ints and strings pass through."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    """Write rows (iterables of cells) as UTF-8 CSV with a header row.

    Floats are written with repr so reading them back reproduces the exact
    binary values.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(c) for c in row])
