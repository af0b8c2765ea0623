"""Worker pool with reproducible, fixed-chunk reductions."""

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from types import TracebackType
from typing import Self

import psutil
from loguru import logger

__all__ = ["ChunkedPool", "chunk_bounds"]


def chunk_bounds(n: int, chunk_size: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into consecutive ``(start, stop)`` chunks."""
    if chunk_size <= 0:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    return [(start, min(start + chunk_size, n)) for start in range(0, n, chunk_size)]


class ChunkedPool:
    """Thread pool whose results never depend on the number of workers.

    Work is cut into chunks whose size is fixed by the caller, each chunk is
    evaluated independently, and results come back in chunk order so any
    subsequent reduction runs in the same order for every thread count.
    """

    def __init__(self, threads: int | None = None) -> None:
        """Initialize the pool.

        Args:
            threads: Worker count; ``None`` or 0 uses all available cores.

        """
        super().__init__()
        self.threads = max(1, threads if threads else (psutil.cpu_count() or 1))
        self._executor: ThreadPoolExecutor | None = None
        logger.debug(f"Chunked pool configured with {self.threads} thread(s)")

    def map_ranges[R](self, fn: Callable[[int, int], R], n: int, chunk_size: int) -> list[R]:
        """Apply ``fn(start, stop)`` to each chunk of ``range(n)``, results in chunk order."""
        bounds = chunk_bounds(n, chunk_size)
        if self.threads == 1 or len(bounds) <= 1:
            return [fn(start, stop) for start, stop in bounds]
        executor = self._ensure_executor()
        futures = [executor.submit(fn, start, stop) for start, stop in bounds]
        return [future.result() for future in futures]

    def map_chunks[T, R](self, fn: Callable[[Sequence[T]], R], items: Sequence[T], chunk_size: int) -> list[R]:
        """Apply ``fn`` to consecutive ``chunk_size`` slices of ``items``, results in chunk order."""
        return self.map_ranges(lambda start, stop: fn(items[start:stop]), len(items), chunk_size)

    def _ensure_executor(self) -> ThreadPoolExecutor:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="guider")
        return self._executor

    def close(self) -> None:
        """Shut down worker threads."""
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> Self:
        """Context manager entry."""
        return self

    def __exit__(self, exc_type: type[BaseException] | None, exc_val: BaseException | None, exc_tb: TracebackType | None) -> None:
        """Context manager exit."""
        self.close()
