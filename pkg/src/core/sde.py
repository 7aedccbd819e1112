"""Euler-Maruyama and exact simulation of dX = mu(t,X) dt + sigma(t,X) dW."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .estimate import WorkCounter
from .expr import parse
from .rng import RngStream, Tag
from ..system.parallel import SERIAL, BatchRunner
from ..utils.exceptions import ConfigurationError, NonFiniteError
from ..utils.logging import get_logger

logger = get_logger("core.sde")

EULER = "euler_maruyama"
EXACT = "exact_constant_diffusion"
SCHEMES = (EULER, EXACT)


@dataclass(frozen=True)
class SdeCoefficients:
    """Drift vector and diffusion matrix as expressions in (t, x)."""
    d: int
    m: int
    mu: tuple
    sigma: tuple
    lipschitz_L: float = 0.0

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ValueError("d and m must be at least 1")
        if len(self.mu) != self.d:
            raise ValueError(f"mu must have {self.d} entries, got {len(self.mu)}")
        if len(self.sigma) != self.d or any(len(row) != self.m for row in self.sigma):
            raise ValueError(f"sigma must be a {self.d}x{self.m} matrix")
        if self.lipschitz_L < 0:
            raise ValueError("lipschitz_L must be non-negative")
        for expression in self.expressions():
            if expression.dimension != self.d:
                raise ValueError(f"coefficient '{expression}' declares dimension {expression.dimension}")
            if expression.uses_v:
                raise ValueError(f"coefficient '{expression}' must not reference v")

    @classmethod
    def from_strings(cls, mu: Sequence[str], sigma: Sequence[Sequence[str]],
                     lipschitz_L: float = 0.0) -> "SdeCoefficients":
        d = len(mu)
        m = len(sigma[0]) if sigma else 0
        return cls(
            d=d,
            m=m,
            mu=tuple(parse(source, d) for source in mu),
            sigma=tuple(tuple(parse(source, d) for source in row) for row in sigma),
            lipschitz_L=float(lipschitz_L),
        )

    def expressions(self) -> list:
        return list(self.mu) + [entry for row in self.sigma for entry in row]

    @property
    def has_constant_drift(self) -> bool:
        return all(e.is_constant for e in self.mu)

    @property
    def has_constant_diffusion(self) -> bool:
        return all(e.is_constant for row in self.sigma for e in row)

    def drift(self, t, x: np.ndarray, counter: Optional[WorkCounter] = None) -> np.ndarray:
        """mu at N points, shape (N, d)."""
        return np.stack([e.evaluate_batch(t, x, counter=counter) for e in self.mu], axis=1)

    def diffusion(self, t, x: np.ndarray, counter: Optional[WorkCounter] = None) -> np.ndarray:
        """sigma at N points, shape (N, d, m)."""
        rows = [np.stack([e.evaluate_batch(t, x, counter=counter) for e in row], axis=1)
                for row in self.sigma]
        return np.stack(rows, axis=1)

    def constant_drift(self) -> np.ndarray:
        origin = np.zeros((1, self.d))
        return self.drift(0.0, origin)[0]

    def constant_diffusion(self) -> np.ndarray:
        origin = np.zeros((1, self.d))
        return self.diffusion(0.0, origin)[0]

    def with_drift_shift(self, shift: Sequence[float]) -> "SdeCoefficients":
        """Same coefficients with mu replaced by mu + shift."""
        mu = tuple(e.shifted(float(offset)) for e, offset in zip(self.mu, shift))
        return SdeCoefficients(self.d, self.m, mu, self.sigma, self.lipschitz_L)


@dataclass(frozen=True)
class StopRule:
    """Freeze a path once V(t, X_t) reaches the level."""
    lyapunov: object
    level: float

    def __post_init__(self):
        if self.level <= 0:
            raise ValueError("stop level must be positive")

    def reached(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.lyapunov.log_values(t, x) >= math.log(self.level)


@dataclass(frozen=True)
class PathPlan:
    """Uniform integration grid on [t_start, t_end]."""
    t_start: float
    t_end: float
    steps: int
    scheme: str = EULER
    stop: Optional[StopRule] = None

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("t_start must be strictly less than t_end")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.steps + 1)


@dataclass
class PathResult:
    times: np.ndarray
    states: np.ndarray
    stopped_early: bool = False
    stop_time: float = field(default=float("nan"))


def resolve_scheme(c: SdeCoefficients, requested: Optional[str] = None) -> str:
    """Pick the scheme; the exact sampler needs constant drift and diffusion."""
    constant = c.has_constant_drift and c.has_constant_diffusion
    if requested in (None, "auto"):
        return EXACT if constant else EULER
    if requested not in SCHEMES:
        raise ConfigurationError(f"unknown scheme '{requested}', expected one of {SCHEMES}")
    if requested == EXACT and not constant:
        raise ConfigurationError("exact sampling requires constant drift and diffusion")
    return requested


def em_step(state: np.ndarray, t: float, dt: float, dW: np.ndarray, c: SdeCoefficients) -> np.ndarray:
    """One Euler-Maruyama step: state + mu(t,state) dt + sigma(t,state) dW."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    states = np.asarray(state, dtype=float).reshape(1, c.d)
    increments = np.asarray(dW, dtype=float).reshape(1, c.m)
    return em_step_batch(states, np.array([t]), np.array([dt]), increments, c)[0]


def em_step_batch(states: np.ndarray, t: np.ndarray, dt: np.ndarray, dW: np.ndarray,
                  c: SdeCoefficients, counter: Optional[WorkCounter] = None,
                  step: Optional[int] = None) -> np.ndarray:
    """Euler-Maruyama step for N states at once."""
    drift = c.drift(t, states, counter)
    diffusion = c.diffusion(t, states, counter)
    updated = states + drift * np.reshape(dt, (-1, 1)) + np.einsum("ndm,nm->nd", diffusion, dW)
    if not np.all(np.isfinite(updated)):
        raise NonFiniteError("Euler-Maruyama step produced a non-finite state", step)
    return updated


def exact_constant_diffusion_sample(x0: Sequence[float], t: float, s: float, B: np.ndarray,
                                    rng: RngStream) -> np.ndarray:
    """x0 + B Z sqrt(s - t) with Z standard normal; no time grid."""
    if s < t:
        raise ValueError("s must not precede t")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    z = rng.normals(0, B.shape[1])
    return np.asarray(x0, dtype=float) + B @ z * math.sqrt(s - t)


class PathSimulator:
    """
    Batched path sampling for a fixed set of coefficients.

    Path i of a batch draws its increments at counter position i of the
    per-step streams, so a batch split into chunks reproduces the unsplit
    batch exactly.
    """

    def __init__(self, coefficients: SdeCoefficients, steps: int = 1, scheme: Optional[str] = None,
                 runner: BatchRunner = SERIAL, counter: Optional[WorkCounter] = None):
        if steps < 1:
            raise ValueError("steps must be at least 1")
        self.c = coefficients
        self.steps = steps
        self.scheme = resolve_scheme(coefficients, scheme)
        self.runner = runner
        self.counter = counter

        if self.scheme == EXACT:
            self._drift = coefficients.constant_drift()
            self._diffusion = coefficients.constant_diffusion()
            if counter is not None:
                counter.add(coefficients.d + coefficients.d * coefficients.m)

    def sample_nodes(self, t0: np.ndarray, x0: np.ndarray, node_times: np.ndarray, t_end: float,
                     stream: RngStream) -> tuple:
        """
        Terminal states and states at per-path node times.

        Args:
            t0: Start times, shape (N,)
            x0: Start states, shape (N, d)
            node_times: Ascending times in [t0, t_end), shape (N, Q)
            t_end: Common terminal time
            stream: Stream owning these N paths

        Returns:
            (X_T of shape (N, d), X at nodes of shape (N, Q, d)); under the
            Euler scheme a node reads the grid point at or before it
        """
        t0 = np.asarray(t0, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        node_times = np.asarray(node_times, dtype=float)

        if self.scheme == EXACT:
            def run(start: int, stop: int):
                return self._exact_chunk(t0[start:stop], x0[start:stop], node_times[start:stop],
                                         t_end, stream, start)
        else:
            dt = (t_end - t0) / self.steps
            grid_index = np.floor((node_times - t0[:, None]) / dt[:, None]).astype(int)
            grid_index = np.clip(grid_index, 0, self.steps - 1)

            def run(start: int, stop: int):
                terminal, recorded, _ = self._euler_chunk(
                    t0[start:stop], x0[start:stop], dt[start:stop], stream, start,
                    grid_index[start:stop], None
                )
                return terminal, recorded

        parts = self.runner.map_ranges(run, len(t0))
        if not parts:
            return np.empty((0, self.c.d)), np.empty((0, node_times.shape[1], self.c.d))
        return (np.concatenate([part[0] for part in parts]),
                np.concatenate([part[1] for part in parts]))

    def trajectories(self, t0: float, x0: np.ndarray, t_end: float, stream: RngStream,
                     stop: Optional[StopRule] = None) -> tuple:
        """
        Full grid trajectories for N paths sharing a start time.

        Returns:
            (times of shape (steps+1,), states of shape (N, steps+1, d),
            stop step per path or -1)
        """
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        count = x0.shape[0]
        times = t0 + (t_end - t0) / self.steps * np.arange(self.steps + 1)
        start_times = np.full(count, float(t0))

        if self.scheme == EXACT:
            nodes = np.broadcast_to(times, (count, self.steps + 1))

            def run(start: int, stop_: int):
                _, recorded = self._exact_chunk(start_times[start:stop_], x0[start:stop_],
                                                nodes[start:stop_], t_end, stream, start)
                return recorded

            states = np.concatenate(self.runner.map_ranges(run, count))
            stop_step = np.full(count, -1)
            if stop is not None:
                states, stop_step = _freeze_after_stop(times, states, stop)
            return times, states, stop_step

        dt = np.full(count, (t_end - t0) / self.steps)
        record = np.broadcast_to(np.arange(self.steps + 1), (count, self.steps + 1))

        def run(start: int, stop_: int):
            _, recorded, stop_step = self._euler_chunk(
                start_times[start:stop_], x0[start:stop_], dt[start:stop_], stream, start,
                record[start:stop_], stop
            )
            return recorded, stop_step

        parts = self.runner.map_ranges(run, count)
        return (times, np.concatenate([part[0] for part in parts]),
                np.concatenate([part[1] for part in parts]))

    def _euler_chunk(self, t0, x0, dt, stream, offset, record_index, stop):
        count, d = x0.shape
        states = x0.copy()
        recorded = np.empty((count, record_index.shape[1], d))
        active = np.ones(count, dtype=bool)
        stop_step = np.full(count, -1)
        root_dt = np.sqrt(dt)

        for k in range(self.steps + 1):
            t_k = t0 + k * dt
            if stop is not None:
                live = np.nonzero(active)[0]
                if live.size:
                    hit = live[stop.reached(t_k[live], states[live])]
                    stop_step[hit] = k
                    active[hit] = False

            rows, cols = np.nonzero(record_index == k)
            recorded[rows, cols] = states[rows]
            if k == self.steps:
                break

            normals = stream.child(Tag.INCREMENT, k).normal_rows(offset, count, self.c.m)
            live = np.nonzero(active)[0]
            if live.size == 0:
                continue
            dW = normals[live] * root_dt[live, None]
            states[live] = em_step_batch(states[live], t_k[live], dt[live], dW, self.c,
                                         self.counter, step=k)

        return states, recorded, stop_step

    def _exact_chunk(self, t0, x0, node_times, t_end, stream, offset):
        count, d = x0.shape
        nodes = node_times.shape[1]
        states = x0.copy()
        current = t0.copy()
        recorded = np.empty((count, nodes, d))

        for q in range(nodes + 1):
            target = node_times[:, q] if q < nodes else np.full(count, float(t_end))
            elapsed = np.maximum(target - current, 0.0)
            z = stream.child(Tag.EXACT, q).normal_rows(offset, count, self.c.m)
            states = (states + self._drift * elapsed[:, None]
                      + (z @ self._diffusion.T) * np.sqrt(elapsed)[:, None])
            if q < nodes:
                recorded[:, q] = states
            current = target

        if not np.all(np.isfinite(states)):
            raise NonFiniteError("exact sampler produced a non-finite state")
        return states, recorded


def _freeze_after_stop(times: np.ndarray, states: np.ndarray, stop: StopRule) -> tuple:
    count, points, d = states.shape
    flat_t = np.broadcast_to(times, (count, points)).reshape(-1)
    hit = stop.reached(flat_t, states.reshape(-1, d)).reshape(count, points)
    any_hit = hit.any(axis=1)
    first = np.where(any_hit, hit.argmax(axis=1), -1)
    frozen = states.copy()
    for path in np.nonzero(any_hit)[0]:
        frozen[path, first[path]:] = states[path, first[path]]
    return frozen, first


def simulate_paths(x0: Sequence[float], plan: PathPlan, c: SdeCoefficients, rng: RngStream,
                   paths: int, runner: BatchRunner = SERIAL,
                   counter: Optional[WorkCounter] = None) -> tuple:
    """Trajectories of `paths` independent paths from a common x0."""
    start = np.tile(np.asarray(x0, dtype=float), (paths, 1))
    simulator = PathSimulator(c, plan.steps, plan.scheme, runner, counter)
    return simulator.trajectories(plan.t_start, start, plan.t_end, rng, plan.stop)


def simulate_path(x0: Sequence[float], plan: PathPlan, c: SdeCoefficients, rng: RngStream) -> PathResult:
    """
    One path on the plan's grid.

    When the plan carries a stop rule the path is frozen at the first grid
    point where V reaches the level.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (c.d,):
        raise ValueError(f"x0 must have {c.d} components")
    times, states, stop_step = simulate_paths(x0, plan, c, rng, paths=1)
    stopped = bool(stop_step[0] >= 0)
    stop_time = float(times[stop_step[0]]) if stopped else float(plan.t_end)
    return PathResult(times=times, states=states[0], stopped_early=stopped, stop_time=stop_time)


def paths_frame(times: np.ndarray, states: np.ndarray) -> pd.DataFrame:
    """Long-format table with columns path_id, step, t, x1..xd."""
    count, points, d = states.shape
    frame = pd.DataFrame({
        "path_id": np.repeat(np.arange(count), points),
        "step": np.tile(np.arange(points), count),
        "t": np.tile(times, count),
    })
    for i in range(d):
        frame[f"x{i + 1}"] = states[:, :, i].reshape(-1)
    return frame
