"""
Utility functions shared among the command providers.
"""

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from loguru import logger

from ..core.errors import ModelIOError

T = TypeVar("T")
R = TypeVar("R")


# --- CSV output ---


def write_csv(path: str, config_hash: str, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    """
    Write a CSV whose first line is a ``# config_hash=...`` comment.

    Floats are written with ``repr`` so identical runs give identical files.

    Args:
        path: Target file; parent directories are created.
        config_hash: Hash of the configuration that produced the data.
        columns: Header row.
        rows: Data rows.

    Returns:
        The path written.

    Raises:
        ModelIOError: If the file cannot be written.
    """
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(f"# config_hash={config_hash}\n")
            writer = csv.writer(f)
            writer.writerow(list(columns))
            for row in rows:
                writer.writerow([_cell(value) for value in row])
    except OSError as e:
        raise ModelIOError(f"Failed to write CSV '{path}': {e}") from e
    logger.debug(f"Wrote {path}")
    return path


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def read_csv(path: str) -> Tuple[str, List[str], List[List[str]]]:
    """Read a CSV written by write_csv: (config hash, header, rows)."""
    with open(path, newline="", encoding="utf-8") as f:
        first = f.readline().strip()
        reader = csv.reader(f)
        header = next(reader)
        rows = [row for row in reader]
    return first.removeprefix("# config_hash="), header, rows


# --- Statistics ---


def ensemble_stats(values: Sequence[float]) -> Tuple[float, float, float]:
    """(median, max, min) of an error ensemble."""
    array = np.asarray(values, dtype=float)
    if array.size == 0:
        raise ValueError("Cannot summarize an empty ensemble")
    return float(np.median(array)), float(array.max()), float(array.min())


# --- Execution helpers ---


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None) -> List[R]:
    """
    Ordered map over a thread pool; runs inline with one thread.

    numpy and scipy release the GIL in their kernels, so per-parameter solves overlap.
    """
    items = list(items)
    if not threads or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def make_mapper(threads: Optional[int]) -> Callable[[Callable, Iterable], List]:
    """A map-like callable bound to a thread count."""

    def mapper(fn: Callable, items: Iterable) -> List:
        return parallel_map(fn, list(items), threads)

    return mapper


class Timer:
    """Context manager recording wall time in ``elapsed`` (seconds)."""

    def __init__(self):
        self.elapsed = 0.0
        self._start = 0.0

    def __enter__(self) -> "Timer":
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.elapsed = time.perf_counter() - self._start


def median_time(fn: Callable[[], object], repeats: int = 5) -> float:
    """Median wall time of repeated calls."""
    times = []
    for _ in range(max(repeats, 1)):
        with Timer() as timer:
            fn()
        times.append(timer.elapsed)
    return float(np.median(times))
