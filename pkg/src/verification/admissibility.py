"""
Numerical checks of the hypotheses under which the fixed-point problem is
well posed: supersolution inequalities, growth ratios, Lipschitz bounds and
the heat-type horizon rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lyapunov import LyapunovSpec, generator_batch
from .sampling import PointSet, unit_directions
from ..core.expr import Expression
from ..core.rng import RngStream, Tag
from ..core.sde import SdeCoefficients
from ..utils.exceptions import NonFiniteError, ValueOverflowError
from ..utils.logging import get_logger

logger = get_logger("verification.admissibility")

CLOSED_FORM_TOL = 1e-8
FINITE_DIFFERENCE_TOL = 1e-4
GROWTH_TOL = 1e-2


@dataclass
class GeneratorReport:
    """
    Outcome of a supersolution check.

    `max_violation` is max (G V - rho V) / V and decides the outcome;
    `max_absolute_violation` is max (G V - rho V) over the same grid.
    """
    family: str
    params: dict
    points: int
    max_violation: float
    argmax: dict
    max_absolute_violation: float
    absolute_argmax: dict
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "points": self.points,
            "max_violation": self.max_violation,
            "argmax": self.argmax,
            "max_absolute_violation": self.max_absolute_violation,
            "absolute_argmax": self.absolute_argmax,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass
class GrowthReport:
    radii: list
    f_sups: list
    g_sups: list
    sups: list
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "radii": self.radii,
            "f_sups": self.f_sups,
            "g_sups": self.g_sups,
            "sups": self.sups,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass
class LipschitzReport:
    declared: float
    max_quotient: float
    witness: dict
    samples: int
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "declared": self.declared,
            "max_quotient": self.max_quotient,
            "witness": self.witness,
            "samples": self.samples,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass
class RadialGrowthReport:
    radii: list
    log_minima: list
    passed: bool

    def to_dict(self) -> dict:
        return {"radii": self.radii, "log_minima": self.log_minima, "pass": self.passed}


@dataclass
class HeatTypeReport:
    a: float
    c: float
    horizon: float
    max_horizon: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "c": self.c,
            "horizon": self.horizon,
            "max_admissible_horizon": self.max_horizon,
            "pass": self.passed,
        }


def check_supersolution(spec: LyapunovSpec, c: SdeCoefficients, grid: PointSet,
                        tol: Optional[float] = None) -> GeneratorReport:
    """
    Check G V <= rho V at every grid point.

    The violation at a point is (G V - rho V) / V, which has the sign of the
    absolute violation and stays comparable across the grid when V grows
    exponentially.
    """
    if tol is None:
        tol = FINITE_DIFFERENCE_TOL if spec.uses_finite_differences else CLOSED_FORM_TOL
    generator, value = generator_batch(spec, c, grid.times, grid.states)
    absolute = generator - spec.rho * value
    violation = absolute / value
    worst = int(np.argmax(violation))
    worst_absolute = int(np.argmax(absolute))
    report = GeneratorReport(
        family=spec.family,
        params=spec.params(),
        points=len(grid),
        max_violation=float(violation[worst]),
        argmax=grid.point(worst),
        max_absolute_violation=float(absolute[worst_absolute]),
        absolute_argmax=grid.point(worst_absolute),
        tolerance=float(tol),
        passed=bool(violation[worst] <= tol),
    )
    logger.debug(f"Supersolution check ({spec.family}): max violation {report.max_violation:.3e}")
    return report


def fit_supersolution_rate(spec: LyapunovSpec, c: SdeCoefficients, grid: PointSet,
                           margin: float = 1e-8, tol: Optional[float] = None) -> tuple:
    """
    Smallest rho with G V <= rho V on the grid.

    Returns:
        (rho_hat = max(0, max G V / V), report of the check at rho_hat + margin)
    """
    generator, value = generator_batch(spec, c, grid.times, grid.states)
    rho_hat = max(0.0, float(np.max(generator / value)))
    report = check_supersolution(spec.with_rho(rho_hat + margin), c, grid, tol)
    return rho_hat, report


def _ratios(expression: Expression, t: np.ndarray, x: np.ndarray, spec: LyapunovSpec) -> np.ndarray:
    try:
        values = expression.evaluate_batch(t, x)
    except NonFiniteError:
        return np.full(x.shape[0], np.inf)
    try:
        log_v = spec.log_values(t, x)
    except (NonFiniteError, ValueOverflowError):
        return np.zeros(x.shape[0])
    with np.errstate(divide="ignore", over="ignore"):
        return np.exp(np.log(np.abs(values)) - log_v)


def check_growth_ratio(f0: Expression, g: Expression, spec: LyapunovSpec, radii: Sequence[float],
                       samples_per_shell: int, rng: RngStream, horizon: float = 1.0,
                       tol: float = GROWTH_TOL) -> GrowthReport:
    """
    Shell-wise sup of |f(t,x,0)|/V(t,x) + |g(x)|/V(T,x) on spheres |x| = r.

    Passes when the sups are non-increasing after the first shell, all finite,
    and the last one is below tol.
    """
    radii = [float(r) for r in radii]
    if not radii or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be a non-empty strictly increasing list")
    if samples_per_shell < 8:
        raise ValueError("samples_per_shell must be at least 8")
    if f0.uses_v:
        raise ValueError("f0 must be f evaluated at v = 0")

    d = g.dimension
    f_sups, g_sups, sups = [], [], []
    for index, radius in enumerate(radii):
        x = radius * unit_directions(rng.child(Tag.SHELL, index), samples_per_shell, d)
        times = horizon * rng.child(Tag.TIME, index).uniforms(0, samples_per_shell)
        f_part = _ratios(f0, times, x, spec)
        g_part = _ratios(g, np.full(samples_per_shell, float(horizon)), x, spec)
        f_sups.append(float(np.max(f_part)))
        g_sups.append(float(np.max(g_part)))
        sups.append(float(np.max(f_part + g_part)))

    finite = all(math.isfinite(s) for s in sups)
    tail = sups[1:]
    non_increasing = all(b <= a for a, b in zip(tail, tail[1:]))
    passed = finite and non_increasing and sups[-1] < tol
    return GrowthReport(radii, f_sups, g_sups, sups, float(tol), bool(passed))


def check_radial_growth(spec: LyapunovSpec, radii: Sequence[float], samples_per_shell: int,
                        rng: RngStream, d: int, t: float = 0.0) -> RadialGrowthReport:
    """Shell minima of V must increase strictly with the radius."""
    minima = []
    for index, radius in enumerate(radii):
        x = float(radius) * unit_directions(rng.child(Tag.SHELL, index), samples_per_shell, d)
        minima.append(float(np.min(spec.log_values(np.full(samples_per_shell, t), x))))
    passed = all(b > a for a, b in zip(minima, minima[1:]))
    return RadialGrowthReport([float(r) for r in radii], minima, bool(passed))


def admissible_heat_type(a: float, c: float, T: float) -> bool:
    """Whether c < 1/(2aT) strictly."""
    if a <= 0 or c < 0 or T <= 0:
        raise ValueError("require a > 0, c >= 0 and T > 0")
    return c * 2.0 * a * T < 1.0


def heat_type_constant(B: np.ndarray) -> float:
    """sup over unit y of <y, B B* y>, the top eigenvalue of B B*."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return float(np.linalg.eigvalsh(B @ B.T).max())


def max_admissible_horizon(a: float, c: float) -> float:
    if a <= 0 or c < 0:
        raise ValueError("require a > 0 and c >= 0")
    return math.inf if c == 0 else 1.0 / (2.0 * a * c)


def check_heat_type(a: float, c: float, T: float) -> HeatTypeReport:
    return HeatTypeReport(float(a), float(c), float(T), max_admissible_horizon(a, c),
                          admissible_heat_type(a, c, T))


def lipschitz_probe(f: Expression, L: float, sample: Sequence[tuple],
                    tol: float = CLOSED_FORM_TOL) -> LipschitzReport:
    """Largest |f(t,x,v) - f(t,x,w)| / |v - w| over (t, x, v, w) tuples."""
    if not sample:
        raise ValueError("Lipschitz sample must not be empty")
    times = np.array([float(item[0]) for item in sample])
    states = np.array([np.atleast_1d(np.asarray(item[1], dtype=float)) for item in sample])
    v = np.array([float(item[2]) for item in sample])
    w = np.array([float(item[3]) for item in sample])
    if np.any(v == w):
        raise ValueError("each sample needs v != w")

    quotients = np.abs(f.evaluate_batch(times, states, v) - f.evaluate_batch(times, states, w)) / np.abs(v - w)
    worst = int(np.argmax(quotients))
    witness = {"t": float(times[worst]), "x": states[worst].tolist(),
               "v": float(v[worst]), "w": float(w[worst])}
    return LipschitzReport(float(L), float(quotients[worst]), witness, len(sample), float(tol),
                           bool(quotients[worst] <= L + tol))


def random_lipschitz_sample(d: int, count: int, rng: RngStream, radius: float = 10.0,
                            value_range: float = 5.0, horizon: float = 1.0) -> list:
    """Random (t, x, v, w) tuples with x in the ball and v, w in [-range, range]."""
    directions = unit_directions(rng.child(Tag.PROBE), count, d)
    scale = radius * rng.child(Tag.PROBE, 1).uniforms(0, count) ** (1.0 / d)
    times = horizon * rng.child(Tag.TIME).uniforms(0, count)
    values = value_range * (2.0 * rng.child(Tag.PROBE, 2).uniforms(0, 2 * count) - 1.0)
    v, w = values[:count], values[count:]
    # nearby pairs resolve the local slope
    w[::2] = v[::2] + 1e-3 * (w[::2] / value_range + 2.0)
    return [(times[i], directions[i] * scale[i], v[i], w[i]) for i in range(count)]


def local_lipschitz_probe(c: SdeCoefficients, radius: float, samples: int, rng: RngStream,
                          horizon: float = 1.0, tol: float = CLOSED_FORM_TOL) -> LipschitzReport:
    """
    Sampled (|mu(x) - mu(y)| + |sigma(x) - sigma(y)|_F) / |x - y| on the ball
    of the given radius, compared with the declared lipschitz_L.
    """
    d = c.d
    directions = unit_directions(rng.child(Tag.PROBE), samples, d)
    x = directions * (radius * rng.child(Tag.PROBE, 1).uniforms(0, samples) ** (1.0 / d))[:, None]
    offsets = unit_directions(rng.child(Tag.PROBE, 2), samples, d)
    offsets *= (0.05 * radius * rng.child(Tag.PROBE, 3).uniforms(0, samples))[:, None]
    y = x + offsets
    times = horizon * rng.child(Tag.TIME).uniforms(0, samples)

    drift_gap = np.linalg.norm(c.drift(times, x) - c.drift(times, y), axis=1)
    diffusion_gap = np.linalg.norm(c.diffusion(times, x) - c.diffusion(times, y), axis=(1, 2))
    quotients = (drift_gap + diffusion_gap) / np.linalg.norm(x - y, axis=1)
    worst = int(np.argmax(quotients))
    witness = {"t": float(times[worst]), "x": x[worst].tolist(), "y": y[worst].tolist()}
    return LipschitzReport(c.lipschitz_L, float(quotients[worst]), witness, samples, float(tol),
                           bool(quotients[worst] <= c.lipschitz_L + tol))
