"""Checks on the SDE itself: coercivity, coefficient stability, supermartingale."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lyapunov import LyapunovSpec
from .sampling import PointSet
from ..core.estimate import Estimate, WorkCounter
from ..core.rng import RngStream, Tag
from ..core.sde import PathPlan, PathSimulator, SdeCoefficients, StopRule, em_step_batch
from ..system.parallel import SERIAL, BatchRunner
from ..utils.logging import get_logger

logger = get_logger("verification.dynamics")

SPECTRAL = "spectral"
FROBENIUS = "frobenius"


@dataclass
class CoercivityReport:
    L: float
    points: int
    norm: str
    max_drift_violation: float
    drift_witness: dict
    max_diffusion_violation: float
    diffusion_witness: dict
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "points": self.points,
            "norm": self.norm,
            "max_drift_violation": self.max_drift_violation,
            "drift_witness": self.drift_witness,
            "max_diffusion_violation": self.max_diffusion_violation,
            "diffusion_witness": self.diffusion_witness,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass
class StabilityReport:
    gap: float
    estimate: Estimate
    bound: float
    truncation_radius: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "estimate": self.estimate.to_dict(),
            "bound": self.bound,
            "truncation_radius": self.truncation_radius,
            "pass": self.passed,
        }


@dataclass
class SupermartingaleReport:
    initial_value: float
    rows: list
    passed: bool

    def to_dict(self) -> dict:
        return {"initial_value": self.initial_value, "rows": self.rows, "pass": self.passed}


def coercivity_check(c: SdeCoefficients, L: float, sample_points: PointSet,
                     tol: float = 1e-12) -> CoercivityReport:
    """
    Worst values of <x, mu> - L (1 + |x|^2) and |sigma| - L (1 + |x|).

    The operator norm of sigma is exact for constant diffusion and bounded
    by the Frobenius norm otherwise.
    """
    t, x = sample_points.times, sample_points.states
    drift = c.drift(t, x)
    drift_violation = np.sum(x * drift, axis=1) - L * (1.0 + np.sum(x * x, axis=1))

    if c.has_constant_diffusion:
        norm = SPECTRAL
        sigma_norm = np.full(len(t), float(np.linalg.norm(c.constant_diffusion(), 2)))
    else:
        norm = FROBENIUS
        sigma_norm = np.linalg.norm(c.diffusion(t, x), axis=(1, 2))
    diffusion_violation = sigma_norm - L * (1.0 + np.linalg.norm(x, axis=1))

    i = int(np.argmax(drift_violation))
    j = int(np.argmax(diffusion_violation))
    passed = drift_violation[i] <= tol and diffusion_violation[j] <= tol
    return CoercivityReport(
        L=float(L),
        points=len(sample_points),
        norm=norm,
        max_drift_violation=float(drift_violation[i]),
        drift_witness=sample_points.point(i),
        max_diffusion_violation=float(diffusion_violation[j]),
        diffusion_witness=sample_points.point(j),
        tolerance=tol,
        passed=bool(passed),
    )


def stability_bound(gap: float, L: float, tau: float) -> float:
    """4 tau (tau + 1) gap^2 exp(4 L^2 tau (tau + 1))."""
    growth = tau * (tau + 1.0)
    return 4.0 * growth * gap * gap * math.exp(4.0 * L * L * growth)


def stability_bound_test(c: SdeCoefficients, perturbation_size: float, paths: int, plan: PathPlan,
                         rng: RngStream, x0: Optional[Sequence[float]] = None,
                         truncation_radius: float = 10.0, runner: BatchRunner = SERIAL,
                         counter: Optional[WorkCounter] = None) -> StabilityReport:
    """
    Coupled simulation under c and under c with mu shifted by gap / sqrt(d)
    in every component.

    Both systems consume the same increments. A coupled pair is frozen the
    first time either state leaves the ball of `truncation_radius`.
    """
    if perturbation_size < 0:
        raise ValueError("perturbation_size must be non-negative")
    if paths < 2:
        raise ValueError("need at least two paths for a standard error")
    counter = counter or WorkCounter()
    start = np.zeros(c.d) if x0 is None else np.asarray(x0, dtype=float)
    shifted = c if perturbation_size == 0 else c.with_drift_shift(
        np.full(c.d, perturbation_size / math.sqrt(c.d)))
    dt = plan.dt
    root_dt = math.sqrt(dt)

    def stream_normals(k: int, first: int, count: int) -> np.ndarray:
        return rng.child(Tag.INCREMENT, k).normal_rows(first, count, c.m)

    def run(first: int, stop: int) -> np.ndarray:
        count = stop - first
        base = np.tile(start, (count, 1))
        perturbed = base.copy()
        active = np.ones(count, dtype=bool)
        for k in range(plan.steps):
            inside = ((np.linalg.norm(base, axis=1) <= truncation_radius)
                      & (np.linalg.norm(perturbed, axis=1) <= truncation_radius))
            active &= inside
            live = np.nonzero(active)[0]
            if live.size == 0:
                break
            dW = stream_normals(k, first, count)[live] * root_dt
            t_k = np.full(live.size, plan.t_start + k * dt)
            steps = np.full(live.size, dt)
            base[live] = em_step_batch(base[live], t_k, steps, dW, c, counter, k)
            perturbed[live] = em_step_batch(perturbed[live], t_k, steps, dW, shifted, counter, k)
        return np.sum((base - perturbed) ** 2, axis=1)

    squared = np.concatenate(runner.map_ranges(run, paths))
    estimate = Estimate.from_samples(squared, counter.count)
    bound = stability_bound(perturbation_size, c.lipschitz_L, plan.t_end - plan.t_start)
    passed = estimate.value <= bound + 3.0 * (estimate.std_error or 0.0)
    logger.debug(f"Stability test gap={perturbation_size}: {estimate.value:.4e} vs bound {bound:.4e}")
    return StabilityReport(float(perturbation_size), estimate, bound, float(truncation_radius), bool(passed))


def supermartingale_test(spec: LyapunovSpec, c: SdeCoefficients, x0: Sequence[float],
                         check_times: Sequence[float], paths: int, steps: int, rng: RngStream,
                         stop_level: Optional[float] = None, runner: BatchRunner = SERIAL,
                         scheme: Optional[str] = None) -> SupermartingaleReport:
    """
    MC mean of V(tau ^ t, X_{tau ^ t}) against V(0, x0) at each check time.

    `spec` is used as given; pass `spec.discounted()` to test the
    time-discounted function of a rho-supersolution. Check times are read at
    the nearest grid point of a uniform grid on [0, max(check_times)].
    """
    check_times = sorted(float(t) for t in check_times)
    if not check_times or check_times[0] < 0:
        raise ValueError("check_times must be non-empty and non-negative")
    horizon = check_times[-1]
    if horizon <= 0:
        raise ValueError("the last check time must be positive")

    x0 = np.asarray(x0, dtype=float)
    initial = float(spec.values(np.zeros(1), x0.reshape(1, -1))[0])
    stop = StopRule(spec, stop_level) if stop_level is not None else None
    simulator = PathSimulator(c, steps, scheme, runner)
    times, states, stop_step = simulator.trajectories(0.0, np.tile(x0, (paths, 1)), horizon, rng, stop)

    rows = []
    passed = True
    for t in check_times:
        k = int(round(t / horizon * steps))
        at = np.full(paths, times[k])
        stopped = (stop_step >= 0) & (stop_step <= k)
        at[stopped] = times[stop_step[stopped]]
        estimate = Estimate.from_samples(spec.values(at, states[:, k]))
        ok = estimate.value <= initial + 3.0 * estimate.std_error
        passed = passed and ok
        rows.append({"t": float(times[k]), **estimate.to_dict(), "bound": initial, "pass": bool(ok)})
    return SupermartingaleReport(initial, rows, bool(passed))
