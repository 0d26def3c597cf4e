"""Per-video pipeline execution.

This module provides the runner every command uses to process videos:
- Concurrent execution of independent per-video pipelines
- Results returned in input order, whatever the worker count
- Atomic (write-then-rename) output files
"""

import asyncio
import logging
import os
import sys
import tempfile
import time
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import TypeVar

from src.errors import InputOutputError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


async def run_per_video(
    items: Sequence[T],
    fn: Callable[[T], R],
    workers: int = 4,
) -> list[R]:
    """Run ``fn`` over every item in worker threads.

    Args:
        items: One entry per video.
        fn: Pure per-video pipeline.
        workers: Maximum pipelines running at once.

    Returns:
        Results in the order of ``items``.  The first exception raised by
        any pipeline propagates once all started pipelines have finished.
    """
    semaphore = asyncio.Semaphore(max(1, workers))

    async def _one(index: int, item: T) -> R:
        async with semaphore:
            started = time.perf_counter()
            result = await asyncio.to_thread(fn, item)
            logger.debug("item %d finished in %.3fs", index, time.perf_counter() - started)
            return result

    results = await asyncio.gather(
        *(_one(i, item) for i, item in enumerate(items)), return_exceptions=True
    )
    for result in results:
        if isinstance(result, BaseException):
            raise result
    return list(results)  # type: ignore[arg-type]


def run_all(items: Sequence[T], fn: Callable[[T], R], workers: int = 4) -> list[R]:
    """Blocking wrapper around run_per_video."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return asyncio.run(run_per_video(items, fn, workers))


def read_input(path: Path | str) -> bytes:
    """Read a file, or stdin when path is "-".

    Raises:
        InputOutputError: If the file cannot be read.
    """
    if str(path) == "-":
        return sys.stdin.buffer.read()
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise InputOutputError(path, e.strerror or str(e)) from e


def write_atomic(path: Path | str, data: bytes) -> None:
    """Write ``data`` to a temp file beside ``path`` then rename it into place.

    "-" writes to stdout.

    Raises:
        InputOutputError: If the file cannot be written.
    """
    if str(path) == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
        return
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as e:
        raise InputOutputError(path, e.strerror or str(e)) from e
