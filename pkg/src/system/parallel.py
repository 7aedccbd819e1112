"""Chunked path execution on a thread pool."""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, TypeVar

try:
    import psutil

    PSUTIL_AVAILABLE = True
except ImportError:
    PSUTIL_AVAILABLE = False

from ..utils.logging import get_logger

logger = get_logger("system.parallel")

T = TypeVar("T")

DEFAULT_CHUNK_SIZE = 8192


def default_thread_count() -> int:
    """Physical core count when psutil can tell, else 1."""
    if PSUTIL_AVAILABLE:
        try:
            cores = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True)
            if cores:
                return int(cores)
        except Exception as e:
            logger.debug(f"psutil could not count CPUs: {e}")
    return 1


class BatchRunner:
    """
    Runs a function over contiguous index ranges.

    Ranges are fixed by the chunk size alone and results are returned in
    range order, so the output never depends on the number of workers.
    """

    def __init__(self, threads: Optional[int] = None, chunk_size: int = DEFAULT_CHUNK_SIZE):
        if threads is not None and threads < 1:
            raise ValueError("threads must be at least 1")
        if chunk_size < 1:
            raise ValueError("chunk_size must be at least 1")
        self.threads = threads or 1
        self.chunk_size = chunk_size

    def ranges(self, total: int) -> List[tuple]:
        return [(start, min(start + self.chunk_size, total))
                for start in range(0, total, self.chunk_size)]

    def map_ranges(self, fn: Callable[[int, int], T], total: int) -> List[T]:
        """Apply fn(start, stop) to every chunk; results in chunk order."""
        chunks = self.ranges(total)
        if self.threads == 1 or len(chunks) <= 1:
            return [fn(start, stop) for start, stop in chunks]

        logger.debug(f"Dispatching {len(chunks)} chunks to {self.threads} threads")
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            futures = [pool.submit(fn, start, stop) for start, stop in chunks]
            return [future.result() for future in futures]


SERIAL = BatchRunner(threads=1)
