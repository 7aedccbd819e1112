"""
Explicit finite-difference solver for the terminal-value problem in d = 1,
marching backward from t = T to t = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .problem import ProblemSpec
from ..utils.exceptions import (
    CflViolationError,
    ConfigurationError,
    NonFiniteError,
    ProbeOutOfRangeError,
)
from ..utils.logging import get_logger

logger = get_logger("core.oracle")

DIRICHLET_EXACT = "dirichlet_exact"
DIRICHLET_G = "dirichlet_g"
EXTRAPOLATE_LINEAR = "extrapolate_linear"
BOUNDARY_KINDS = (DIRICHLET_EXACT, DIRICHLET_G, EXTRAPOLATE_LINEAR)

CFL_CAP = 0.45
LIPSCHITZ_CAP = 0.1
SCHEME_NAME = "explicit_central"


@dataclass(frozen=True)
class FdGrid:
    """nx interior points on [x_min, x_max] and nt uniform time steps."""
    x_min: float
    x_max: float
    nx: int
    nt: int
    boundary: str = EXTRAPOLATE_LINEAR

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be less than x_max")
        if self.nx < 3:
            raise ValueError("nx must be at least 3")
        if self.nt < 1:
            raise ValueError("nt must be at least 1")
        if self.boundary not in BOUNDARY_KINDS:
            raise ValueError(f"boundary must be one of {BOUNDARY_KINDS}")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.nx + 1)

    def nodes(self) -> np.ndarray:
        """All nx + 2 points including both boundaries."""
        return self.x_min + self.h * np.arange(self.nx + 2)

    def interior(self) -> np.ndarray:
        return self.nodes()[1:-1]

    def with_nt(self, nt: int) -> "FdGrid":
        return FdGrid(self.x_min, self.x_max, self.nx, int(nt), self.boundary)


@dataclass
class FdSolution:
    """
    Space-time table of u. Row n holds time times[n]; times descend from T
    to 0, so row 0 is the terminal condition.
    """
    grid: FdGrid
    times: np.ndarray
    x: np.ndarray
    values: np.ndarray
    boundary_values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def full_x(self) -> np.ndarray:
        return self.grid.nodes()

    def full_values(self) -> np.ndarray:
        return np.column_stack([self.boundary_values[:, 0], self.values, self.boundary_values[:, 1]])

    def interpolate(self, t: float, x: float) -> float:
        """
        Bilinear interpolation in (t, x).

        Raises:
            ProbeOutOfRangeError: If (t, x) lies outside the space-time box
        """
        T = self.times[0]
        if not (self.grid.x_min <= x <= self.grid.x_max) or not (0.0 <= t <= T):
            raise ProbeOutOfRangeError(
                f"probe (t={t}, x={x}) outside [0, {T}] x [{self.grid.x_min}, {self.grid.x_max}]"
            )
        table = self.full_values()
        nodes = self.full_x()
        dt = T / self.grid.nt
        position = (T - t) / dt
        row = min(int(math.floor(position)), self.grid.nt - 1)
        weight = position - row
        upper = np.interp(x, nodes, table[row])
        lower = np.interp(x, nodes, table[row + 1])
        return float((1.0 - weight) * upper + weight * lower)

    def to_frame(self) -> pd.DataFrame:
        nodes = self.full_x()
        table = self.full_values()
        return pd.DataFrame({
            "t": np.repeat(self.times, nodes.size),
            "x": np.tile(nodes, self.times.size),
            "u": table.reshape(-1),
        })

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        logger.info(f"Finite-difference table written to {path}")
        return path


def _diffusion_and_drift(p: ProblemSpec, t: float, x: np.ndarray) -> tuple:
    points = x.reshape(-1, 1)
    times = np.full(x.size, t)
    a = np.sum(p.c.diffusion(times, points)[:, 0, :] ** 2, axis=1)
    mu = p.c.drift(times, points)[:, 0]
    return a, mu


def _max_diffusion(p: ProblemSpec, grid: FdGrid) -> float:
    times = p.T - p.T / grid.nt * np.arange(grid.nt)
    return max(float(np.max(_diffusion_and_drift(p, t, grid.interior())[0])) for t in times)


def required_steps(p: ProblemSpec, grid: FdGrid) -> int:
    """Smallest nt satisfying both the CFL cap and L dt <= 0.1 (for t-independent sigma)."""
    a_max = _max_diffusion(p, grid.with_nt(1))
    cfl = math.ceil(p.T * a_max / (CFL_CAP * grid.h ** 2)) if a_max > 0 else 1
    lipschitz = math.ceil(p.L * p.T / LIPSCHITZ_CAP) if p.L > 0 else 1
    return max(1, cfl, lipschitz)


def fd_solve(p: ProblemSpec, grid: FdGrid) -> FdSolution:
    """
    March the explicit central scheme from T down to 0.

    Raises:
        ConfigurationError: If d != 1, or exact Dirichlet data is requested
            without a reference solution
        CflViolationError: If max a dt / h^2 > 0.45 or L dt > 0.1
        NonFiniteError: If the table leaves the floating-point range
    """
    if p.d != 1:
        raise ConfigurationError(f"finite-difference oracle supports d = 1 only, got d = {p.d}")
    if grid.boundary == DIRICHLET_EXACT and p.reference is None:
        raise ConfigurationError(f"problem '{p.id}' has no reference solution for exact boundary data")

    h = grid.h
    dt = p.T / grid.nt
    a_max = _max_diffusion(p, grid)
    cfl_ratio = a_max * dt / h ** 2
    if cfl_ratio > CFL_CAP:
        raise CflViolationError(
            f"explicit scheme unstable: max(sigma^2) dt / h^2 = {cfl_ratio:.3f} > {CFL_CAP}",
            math.ceil(p.T * a_max / (CFL_CAP * h ** 2)),
        )
    if p.L * dt > LIPSCHITZ_CAP:
        raise CflViolationError(
            f"explicit nonlinearity too stiff: L dt = {p.L * dt:.3f} > {LIPSCHITZ_CAP}",
            math.ceil(p.L * p.T / LIPSCHITZ_CAP),
        )

    nodes = grid.nodes()
    interior = nodes[1:-1]
    edges = nodes[[0, -1]].reshape(-1, 1)
    times = p.T - dt * np.arange(grid.nt + 1)

    values = np.empty((grid.nt + 1, grid.nx))
    boundary = np.empty((grid.nt + 1, 2))
    current = p.g_values(nodes.reshape(-1, 1))
    values[0] = current[1:-1]
    boundary[0] = current[[0, -1]]

    for n in range(grid.nt):
        t_now = times[n]
        a, mu = _diffusion_and_drift(p, t_now, interior)
        inner = current[1:-1]
        second = (current[2:] - 2.0 * inner + current[:-2]) / (h * h)
        first = (current[2:] - current[:-2]) / (2.0 * h)
        source = p.f_values(t_now, interior.reshape(-1, 1), inner)
        updated = inner + dt * (0.5 * a * second + mu * first + source)

        if grid.boundary == DIRICHLET_EXACT:
            sides = p.reference_values(times[n + 1], edges)
        elif grid.boundary == DIRICHLET_G:
            sides = boundary[0]
        else:
            sides = np.array([2.0 * updated[0] - updated[1], 2.0 * updated[-1] - updated[-2]])

        current = np.concatenate([[sides[0]], updated, [sides[1]]])
        if not np.all(np.isfinite(current)):
            raise NonFiniteError("finite-difference table left the floating-point range", n)
        values[n + 1] = updated
        boundary[n + 1] = sides

    metadata = {
        "scheme": SCHEME_NAME,
        "cfl_ratio": cfl_ratio,
        "lipschitz_ratio": p.L * dt,
        "h": h,
        "dt": dt,
        "boundary": grid.boundary,
    }
    logger.debug(f"FD solve nx={grid.nx} nt={grid.nt}: CFL ratio {cfl_ratio:.3f}")
    return FdSolution(grid, times, interior, values, boundary, metadata)


def interior_half(grid) -> tuple:
    """The middle half [x_min + w/4, x_max - w/4] of a grid or domain; probes go here."""
    quarter = (grid.x_max - grid.x_min) / 4.0
    return grid.x_min + quarter, grid.x_max - quarter


def solve_with_cfl(p: ProblemSpec, grid: FdGrid, nt: Optional[int] = None) -> FdSolution:
    """fd_solve with nt raised to the smallest stable value when not given."""
    return fd_solve(p, grid.with_nt(nt if nt is not None else max(grid.nt, required_steps(p, grid))))
