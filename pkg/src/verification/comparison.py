"""Agreement between the finite-difference table and Monte-Carlo estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core.estimate import Estimate
from ..core.oracle import FdSolution

DEFAULT_FD_TOL = 2e-2


@dataclass
class ComparisonReport:
    rows: list
    fd_tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {"rows": self.rows, "fd_tol": self.fd_tol, "pass": self.passed}


def fd_compare(sol: FdSolution, mc: Sequence[tuple[float, object, Estimate]], fd_tol: float = DEFAULT_FD_TOL,
               k_se: float = 3.0) -> ComparisonReport:
    """
    Per probe |FD - MC| against k_se * SE + fd_tol.

    Args:
        sol: Finite-difference table
        mc: (t, x, Estimate) triples; x is a scalar or a 1-vector

    Raises:
        ProbeOutOfRangeError: If a probe lies outside the table
    """
    rows = []
    for t, x, estimate in mc:
        position = float(np.asarray(x, dtype=float).reshape(-1)[0])
        fd_value = sol.interpolate(float(t), position)
        error = estimate.std_error or 0.0
        difference = abs(fd_value - estimate.value)
        rows.append({
            "t": float(t),
            "x": position,
            "fd": fd_value,
            "mc": estimate.value,
            "std_error": estimate.std_error,
            "abs_diff": difference,
            "pass": bool(difference <= k_se * error + fd_tol),
        })
    return ComparisonReport(rows, float(fd_tol), all(row["pass"] for row in rows))
