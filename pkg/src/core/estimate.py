"""Monte-Carlo estimates and work accounting."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class WorkCounter:
    """Thread-safe tally of coefficient-expression evaluations."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, evaluations: int) -> None:
        with self._lock:
            self._count += int(evaluations)

    @property
    def count(self) -> int:
        return self._count


@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo value with its standard error and cost."""
    value: float
    std_error: Optional[float]
    samples: int
    work: int

    def __post_init__(self):
        if self.std_error is not None and self.std_error < 0:
            raise ValueError("std_error must be non-negative")

    @classmethod
    def from_samples(cls, samples: Sequence[float], work: int = 0) -> "Estimate":
        """Mean and SE of iid samples; SE is undefined below two samples."""
        values = np.asarray(samples, dtype=float)
        count = values.size
        if count == 0:
            raise ValueError("cannot estimate from zero samples")
        std_error = float(values.std(ddof=1) / math.sqrt(count)) if count >= 2 else None
        return cls(float(values.mean()), std_error, int(count), int(work))

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "samples": self.samples,
            "work": self.work,
        }


def combined_std_error(*estimates: Estimate) -> float:
    """Root-sum-square of the standard errors; undefined errors count as zero."""
    return math.sqrt(sum((e.std_error or 0.0) ** 2 for e in estimates))


def within_standard_errors(a: Estimate, b: float | Estimate, k: float = 3.0,
                           abs_tol: float = 0.0) -> bool:
    """Whether two estimates (or an estimate and a reference) agree within k SE."""
    if isinstance(b, Estimate):
        return abs(a.value - b.value) <= k * combined_std_error(a, b) + abs_tol
    return abs(a.value - b) <= k * (a.std_error or 0.0) + abs_tol
