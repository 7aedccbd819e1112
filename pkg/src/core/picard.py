"""
Nested Monte-Carlo Picard iteration for the fixed-point equation

    v(t, x) = E[ g(X_T) + int_t^T f(s, X_s, v(s, X_s)) ds ].

Evaluators are batch callables (t of shape (N,), x of shape (N, d)) -> (N,).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .estimate import Estimate, WorkCounter, combined_std_error
from .expr import Expression
from .problem import ProblemSpec
from .quadrature import TimeRule
from .rng import RngStream, Tag
from .sde import EXACT, PathSimulator, resolve_scheme
from ..config.models import PicardConfig
from ..system.parallel import SERIAL, BatchRunner
from ..utils.exceptions import BudgetExceededError
from ..utils.logging import get_logger

logger = get_logger("core.picard")

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

PASS = "pass"
FAIL = "fail"
NOISE_FLOOR = "noise_floor"


def zero_evaluator(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.zeros(np.asarray(x).shape[0])


def constant_evaluator(value: float) -> Evaluator:
    def evaluate(t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(x).shape[0], float(value))
    return evaluate


def expression_evaluator(expression: Expression) -> Evaluator:
    def evaluate(t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return expression.evaluate_batch(t, x)
    return evaluate


def pointwise(fn: Callable[[float, np.ndarray], float]) -> Evaluator:
    """Lift a scalar function of (t, x) to a batch evaluator."""
    def evaluate(t: np.ndarray, x: np.ndarray) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
        return np.array([float(fn(float(s), np.asarray(y))) for s, y in zip(t, x)])
    return evaluate


def as_query(t, x) -> tuple:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],)).astype(float)
    return t, x


def fixed_point_samples(v_prev: Evaluator, p: ProblemSpec, t0: np.ndarray, x0: np.ndarray,
                        count: int, simulator: PathSimulator, stream: RngStream,
                        rule: TimeRule, counter: Optional[WorkCounter] = None) -> np.ndarray:
    """
    Samples of g(X_T) + sum_q w_q f(R_q, X_{R_q}, v_prev(R_q, X_{R_q})).

    Query i owns paths i*count .. (i+1)*count - 1 of `stream`.

    Returns:
        Array of shape (N, count)
    """
    queries = t0.size
    starts = np.repeat(t0, count)
    states = np.repeat(x0, count, axis=0)
    node_times, weights = rule.sample(starts, p.T, stream.child(Tag.TIME))
    terminal, nodes = simulator.sample_nodes(starts, states, node_times, p.T, stream)

    nodes_per_path = node_times.shape[1]
    flat_times = node_times.reshape(-1)
    flat_states = nodes.reshape(-1, p.d)
    previous = v_prev(flat_times, flat_states) if p.f_depends_on_v else None
    f_values = p.f_values(flat_times, flat_states, previous, counter).reshape(-1, nodes_per_path)

    samples = p.g_values(terminal, counter) + np.sum(weights * f_values, axis=1)
    return samples.reshape(queries, count)


def _estimate_from_rows(samples: np.ndarray, work: int) -> list:
    count = samples.shape[1]
    means = samples.mean(axis=1)
    if count >= 2:
        errors = samples.std(axis=1, ddof=1) / math.sqrt(count)
    else:
        errors = [None] * samples.shape[0]
    return [Estimate(float(m), None if e is None else float(e), count, int(work))
            for m, e in zip(means, errors)]


def picard_apply(v_prev: Evaluator, p: ProblemSpec, t: float, x: Sequence[float], M: int,
                 sde_steps: int, rng: RngStream, rule: Optional[TimeRule] = None,
                 scheme: Optional[str] = None, runner: BatchRunner = SERIAL,
                 counter: Optional[WorkCounter] = None) -> Estimate:
    """
    One application of the fixed-point map at (t, x) with M paths.

    Raises:
        NonFiniteError: If a path or an integrand leaves the floating-point range
        DomainError: If a coefficient leaves its domain
    """
    if not 0 <= t < p.T:
        raise ValueError(f"t must lie in [0, {p.T})")
    if M < 1:
        raise ValueError("M must be at least 1")
    counter = counter or WorkCounter()
    before = counter.count
    t0, x0 = as_query(t, x)
    simulator = PathSimulator(p.c, sde_steps, scheme, runner, counter)
    samples = fixed_point_samples(v_prev, p, t0, x0, M, simulator, rng, rule or TimeRule.uniform(),
                                  counter)
    return _estimate_from_rows(samples, counter.count - before)[0]


def picard_work_estimate(cfg: PicardConfig, scheme: str) -> float:
    """Paths times steps over all iterates, sum_k M (inner Q)^(k-1) steps."""
    steps = 1 if scheme == EXACT else cfg.sde_steps
    branching = cfg.inner_samples * cfg.time_rule.nodes
    return float(sum(cfg.samples * branching ** (k - 1) * steps for k in range(1, cfg.iterations + 1)))


class NestedPicard:
    """
    Iterates of the nested Picard scheme as batch evaluators.

    Iterate k at a batch of points draws its paths from its own stream and
    evaluates iterate k-1 with the child stream (ITERATE, k-1), so no two
    nesting levels share randomness.
    """

    def __init__(self, p: ProblemSpec, cfg: PicardConfig, runner: BatchRunner = SERIAL,
                 counter: Optional[WorkCounter] = None):
        self.p = p
        self.cfg = cfg
        self.runner = runner
        self.counter = counter or WorkCounter()
        self.scheme = resolve_scheme(p.c, cfg.scheme)

    def initial(self) -> Evaluator:
        if self.cfg.v0 == "terminal_g":
            p, counter = self.p, self.counter
            return lambda t, x: p.g_values(x, counter)
        return zero_evaluator

    def evaluator(self, k: int, stream: RngStream) -> Evaluator:
        if k == 0:
            return self.initial()

        def evaluate(t: np.ndarray, x: np.ndarray) -> np.ndarray:
            return self.samples(k, t, x, self.cfg.inner_samples, stream).mean(axis=1)
        return evaluate

    def samples(self, k: int, t: np.ndarray, x: np.ndarray, count: int,
                stream: RngStream) -> np.ndarray:
        simulator = PathSimulator(self.p.c, self.cfg.sde_steps, self.scheme, self.runner, self.counter)
        previous = self.evaluator(k - 1, stream.child(Tag.ITERATE, k - 1))
        return fixed_point_samples(previous, self.p, t, x, count, simulator, stream,
                                   self.cfg.time_rule, self.counter)


def picard_solve(p: ProblemSpec, cfg: PicardConfig, query: tuple, rng: RngStream,
                 runner: BatchRunner = SERIAL) -> tuple:
    """
    K-th nested Picard iterate at the query point.

    Returns:
        (Estimate of v_K(t, x), [Estimate of v_k(t, x) for k = 1..K]); iterate
        k uses the stream (ITERATE, k) of `rng`

    Raises:
        BudgetExceededError: If the estimated work exceeds cfg.work_budget
    """
    t, x = query
    if not 0 <= t < p.T:
        raise ValueError(f"t must lie in [0, {p.T})")
    scheme = resolve_scheme(p.c, cfg.scheme)
    estimated = picard_work_estimate(cfg, scheme)
    if estimated > cfg.work_budget:
        raise BudgetExceededError(estimated, cfg.work_budget)

    t0, x0 = as_query(t, x)
    iterates = []
    for k in range(1, cfg.iterations + 1):
        counter = WorkCounter()
        nested = NestedPicard(p, cfg, runner, counter)
        samples = nested.samples(k, t0, x0, cfg.samples, rng.child(Tag.ITERATE, k))
        iterates.append(_estimate_from_rows(samples, counter.count)[0])
        logger.debug(f"Picard iterate {k}/{cfg.iterations} at t={t}: {iterates[-1].value:.6g}")
    return iterates[-1], iterates


@dataclass
class ResidualReport:
    rows: list
    summary: float

    def passed(self, k_se: float = 3.0, abs_tol: float = 0.0) -> bool:
        return all(abs(row["residual"]) <= k_se * (row["std_error"] or 0.0) + abs_tol
                   for row in self.rows)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "summary": self.summary}


def fixed_point_residual(v_hat: Evaluator, p: ProblemSpec, probes: Sequence[tuple], M: int,
                         rng: RngStream, sde_steps: int = 1, rule: Optional[TimeRule] = None,
                         scheme: Optional[str] = None, runner: BatchRunner = SERIAL) -> ResidualReport:
    """Phi(v_hat) - v_hat at each probe; probe i uses the stream (PROBE, i)."""
    if not probes:
        raise ValueError("probes must not be empty")
    rows = []
    worst = 0.0
    for index, (t, x) in enumerate(probes):
        t0, x0 = as_query(t, x)
        current = float(v_hat(t0, x0)[0])
        image = picard_apply(v_hat, p, t, x, M, sde_steps, rng.child(Tag.PROBE, index), rule, scheme, runner)
        residual = image.value - current
        rows.append({
            "t": float(t),
            "x": x0[0].tolist(),
            "v_hat": current,
            "phi": image.value,
            "residual": residual,
            "std_error": image.std_error,
        })
        worst = max(worst, abs(residual) / max(1.0, abs(current)))
    return ResidualReport(rows, worst)


@dataclass
class ContractionReport:
    values: list
    differences: list
    noise_floors: list
    ratio: Optional[float]
    threshold: float
    status: str

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def to_dict(self) -> dict:
        return {
            "values": self.values,
            "differences": self.differences,
            "noise_floors": self.noise_floors,
            "ratio": self.ratio,
            "threshold": self.threshold,
            "status": self.status,
        }


def contraction_diagnostic(p: ProblemSpec, cfg: PicardConfig, query: tuple, rng: RngStream,
                           runner: BatchRunner = SERIAL, noise_allowance: float = 0.05) -> ContractionReport:
    """
    Geometric fit of |v_{k+1} - v_k| against k.

    Differences within three combined standard errors of zero are noise; with
    fewer than two differences above that floor the status is `noise_floor`.
    """
    if cfg.iterations < 3:
        raise ValueError("contraction diagnostic needs K >= 3")
    _, iterates = picard_solve(p, cfg, query, rng, runner)
    t = query[0]
    differences, floors = [], []
    for before, after in zip(iterates, iterates[1:]):
        differences.append(abs(after.value - before.value))
        floors.append(3.0 * combined_std_error(before, after))

    threshold = p.L * (p.T - t) * 1.5 + noise_allowance
    signal = [(k, diff) for k, (diff, floor) in enumerate(zip(differences, floors), start=1) if diff > floor]
    if len(signal) < 2:
        logger.warning("Picard differences are at the Monte-Carlo noise floor")
        return ContractionReport([e.value for e in iterates], differences, floors, None, threshold,
                                 NOISE_FLOOR)

    ks = np.array([k for k, _ in signal], dtype=float)
    logs = np.log([diff for _, diff in signal])
    slope, _ = np.polyfit(ks, logs, 1)
    ratio = float(math.exp(slope))
    status = PASS if ratio <= threshold else FAIL
    return ContractionReport([e.value for e in iterates], differences, floors, ratio, threshold, status)

