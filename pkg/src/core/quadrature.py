"""Rules for the time integral of the nonlinearity along a path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngStream

UNIFORM = "uniform"
GAUSS_LEGENDRE = "gauss_legendre"
TIME_RULES = (UNIFORM, GAUSS_LEGENDRE)


@dataclass(frozen=True)
class TimeRule:
    """
    How int_t^T f ds is approximated on one path.

    `uniform` draws one time R ~ U(t, T) per path with weight T - t;
    `gauss_legendre` uses `nodes` fixed Gauss-Legendre nodes on [t, T]
    (one node is the midpoint rule).
    """
    kind: str = UNIFORM
    nodes: int = 1

    def __post_init__(self):
        if self.kind not in TIME_RULES:
            raise ValueError(f"time rule must be one of {TIME_RULES}, got '{self.kind}'")
        if self.nodes < 1:
            raise ValueError("time rule needs at least one node")
        if self.kind == UNIFORM and self.nodes != 1:
            raise ValueError("the uniform time rule draws exactly one time per path")

    @classmethod
    def uniform(cls) -> "TimeRule":
        return cls(UNIFORM, 1)

    @classmethod
    def gauss_legendre(cls, nodes: int) -> "TimeRule":
        return cls(GAUSS_LEGENDRE, int(nodes))

    @classmethod
    def parse(cls, text: str) -> "TimeRule":
        """`uniform`, `midpoint` or `gauss_legendre:<q>`."""
        name, _, count = text.partition(":")
        if name == UNIFORM and not count:
            return cls.uniform()
        if name == "midpoint" and not count:
            return cls.gauss_legendre(1)
        if name == GAUSS_LEGENDRE:
            return cls.gauss_legendre(int(count or 1))
        raise ValueError(f"unknown time rule '{text}'")

    def label(self) -> str:
        return UNIFORM if self.kind == UNIFORM else f"{GAUSS_LEGENDRE}:{self.nodes}"

    def sample(self, t0: np.ndarray, T: float, stream: RngStream) -> tuple:
        """
        Node times and weights for N paths starting at t0.

        Returns:
            (times of shape (N, Q), weights of shape (N, Q)); times ascend
            along each row and lie strictly inside (t0, T)
        """
        t0 = np.asarray(t0, dtype=float)
        span = T - t0
        if self.kind == UNIFORM:
            u = stream.uniforms(0, t0.size)
            return (t0 + span * u)[:, None], span[:, None]
        points, weights = np.polynomial.legendre.leggauss(self.nodes)
        times = t0[:, None] + span[:, None] * (points[None, :] + 1.0) / 2.0
        return times, span[:, None] * weights[None, :] / 2.0
