"""
Full-history recursive multilevel Picard (MLP) estimator.

    U_0 = 0
    U_n(t, x) = M^-n sum_i g(X_T^(n,i))
              + sum_{l<n} M^-(n-l) sum_i (T - t) [ f(R, X_R, U_l) - 1_{l>0} f(R, X_R, U_{l-1}) ]

Level l draws its M^(n-l) paths from the child stream (LEVEL, l), except
level 0 which shares its M^n paths with the g-term and uses the stream
itself. U_l and U_{l-1} inside level l use the independent streams
(LEVEL, l, INNER, 0) and (LEVEL, l, INNER, 1).
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .estimate import Estimate, WorkCounter
from .picard import as_query, fixed_point_samples, zero_evaluator
from .problem import ProblemSpec
from .rng import RngStream, Tag
from .sde import EXACT, PathSimulator, resolve_scheme
from ..config.models import MlpConfig
from ..system.parallel import SERIAL, BatchRunner
from ..utils.exceptions import BudgetExceededError
from ..utils.logging import get_logger

logger = get_logger("core.mlp")


def mlp_work_estimate(cfg: MlpConfig, scheme: str) -> float:
    """Simulated path steps over all replications."""
    steps = 1 if scheme == EXACT else cfg.sde_steps
    nodes = cfg.time_rule.nodes

    @lru_cache(maxsize=None)
    def cost(n: int) -> float:
        if n <= 0:
            return 0.0
        total = cfg.samples ** n * steps
        for level in range(1, n):
            points = cfg.samples ** (n - level)
            total += points * steps + points * nodes * (cost(level) + cost(level - 1))
        return total

    return cfg.replications * cost(cfg.levels)


class MultilevelPicard:
    def __init__(self, p: ProblemSpec, cfg: MlpConfig, runner: BatchRunner = SERIAL,
                 counter: Optional[WorkCounter] = None):
        self.p = p
        self.cfg = cfg
        self.runner = runner
        self.counter = counter or WorkCounter()
        self.scheme = resolve_scheme(p.c, cfg.scheme)

    def _simulator(self) -> PathSimulator:
        return PathSimulator(self.p.c, self.cfg.sde_steps, self.scheme, self.runner, self.counter)

    def values(self, n: int, t: np.ndarray, x: np.ndarray, stream: RngStream) -> np.ndarray:
        """U_n at N points, shape (N,)."""
        if n == 0:
            return np.zeros(t.size)
        p, M, rule = self.p, self.cfg.samples, self.cfg.time_rule

        total = fixed_point_samples(zero_evaluator, p, t, x, M ** n, self._simulator(), stream,
                                    rule, self.counter).mean(axis=1)
        if not p.f_depends_on_v:
            # every correction term is f(.) - f(.) with identical arguments
            return total

        for level in range(1, n):
            total = total + self._correction(n, level, t, x, stream.child(Tag.LEVEL, level))
        return total

    def _correction(self, n: int, level: int, t: np.ndarray, x: np.ndarray,
                    stream: RngStream) -> np.ndarray:
        p, rule = self.p, self.cfg.time_rule
        count = self.cfg.samples ** (n - level)
        starts = np.repeat(t, count)
        states = np.repeat(x, count, axis=0)
        node_times, weights = rule.sample(starts, p.T, stream.child(Tag.TIME))
        _, nodes = self._simulator().sample_nodes(starts, states, node_times, p.T, stream)

        flat_times = node_times.reshape(-1)
        flat_states = nodes.reshape(-1, p.d)
        upper = self.values(level, flat_times, flat_states, stream.child(Tag.INNER, 0))
        lower = self.values(level - 1, flat_times, flat_states, stream.child(Tag.INNER, 1))
        difference = (p.f_values(flat_times, flat_states, upper, self.counter)
                      - p.f_values(flat_times, flat_states, lower, self.counter))
        terms = np.sum(weights * difference.reshape(node_times.shape), axis=1)
        return terms.reshape(t.size, count).mean(axis=1)


def mlp_replication(p: ProblemSpec, cfg: MlpConfig, t: float, x: Sequence[float], stream: RngStream,
                    runner: BatchRunner = SERIAL, counter: Optional[WorkCounter] = None) -> float:
    """One realisation of U_n(t, x) drawn from `stream`."""
    t0, x0 = as_query(t, x)
    return float(MultilevelPicard(p, cfg, runner, counter).values(cfg.levels, t0, x0, stream)[0])


def mlp_estimate(p: ProblemSpec, cfg: MlpConfig, t: float, x: Sequence[float], rng: RngStream,
                 runner: BatchRunner = SERIAL) -> Estimate:
    """
    Mean of cfg.replications independent MLP realisations.

    Replication r uses the stream (REPLICATION, r); the standard error is the
    spread of the replications.

    Raises:
        BudgetExceededError: If the estimated work exceeds cfg.work_budget
    """
    if not 0 <= t < p.T:
        raise ValueError(f"t must lie in [0, {p.T})")
    scheme = resolve_scheme(p.c, cfg.scheme)
    estimated = mlp_work_estimate(cfg, scheme)
    if estimated > cfg.work_budget:
        raise BudgetExceededError(estimated, cfg.work_budget)

    counter = WorkCounter()
    values = [mlp_replication(p, cfg, t, x, rng.child(Tag.REPLICATION, r), runner, counter)
              for r in range(cfg.replications)]
    estimate = Estimate.from_samples(values, counter.count)
    logger.debug(f"MLP n={cfg.levels} M={cfg.samples}: {estimate.value:.6g} +- {estimate.std_error}")
    return estimate
