"""Host description stored alongside run records."""

import platform
import sys
from typing import Any, Dict

import numpy as np

try:
    import psutil

    PSUTIL_AVAILABLE = True
except ImportError:
    PSUTIL_AVAILABLE = False

from ..utils.logging import get_logger

logger = get_logger("system.environment")


def environment_note(threads: int) -> Dict[str, Any]:
    """Describe interpreter, libraries, and hardware for a run record."""
    note: Dict[str, Any] = {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "machine": platform.machine(),
        "numpy": np.__version__,
        "threads": threads,
    }

    if PSUTIL_AVAILABLE:
        try:
            note["cpu_physical"] = psutil.cpu_count(logical=False)
            note["cpu_logical"] = psutil.cpu_count(logical=True)
            note["memory_total_mb"] = round(psutil.virtual_memory().total / 2 ** 20)
        except Exception as e:
            logger.debug(f"psutil query failed: {e}")

    return note
