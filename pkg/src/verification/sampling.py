"""Point sets at which hypotheses are checked."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..core.rng import RngStream, Tag


@dataclass(frozen=True)
class PointSet:
    """N space-time points: times of shape (N,), states of shape (N, d)."""
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if times.size != states.shape[0]:
            raise ValueError("times and states must describe the same number of points")
        if times.size == 0:
            raise ValueError("point set must not be empty")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return self.times.size

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple]) -> "PointSet":
        pairs = list(pairs)
        if not pairs:
            raise ValueError("point set must not be empty")
        return cls(np.array([float(t) for t, _ in pairs]),
                   np.array([np.atleast_1d(np.asarray(x, dtype=float)) for _, x in pairs]))

    def point(self, index: int) -> dict:
        return {"t": float(self.times[index]), "x": self.states[index].tolist()}


def unit_directions(stream: RngStream, count: int, d: int) -> np.ndarray:
    """Uniform directions on the sphere from normalised Gaussians."""
    z = stream.normal_rows(0, count, d)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def ball_points(d: int, radius: float, count: int, rng: RngStream,
                times: Sequence[float] = (0.0,)) -> PointSet:
    """Uniform points in the ball of the given radius, repeated at each time."""
    directions = unit_directions(rng.child(Tag.SHELL), count, d)
    scale = radius * rng.child(Tag.SHELL, 1).uniforms(0, count) ** (1.0 / d)
    states = directions * scale[:, None]
    states[0] = 0.0
    all_times = np.repeat(np.asarray(times, dtype=float), count)
    return PointSet(all_times, np.tile(states, (len(times), 1)))


def lattice_points(d: int, radius: float, per_axis: int,
                   times: Sequence[float] = (0.0,)) -> PointSet:
    """Tensor lattice on [-radius, radius]^d at each time."""
    axis = np.linspace(-radius, radius, per_axis)
    states = np.array(list(itertools.product(axis, repeat=d)))
    all_times = np.repeat(np.asarray(times, dtype=float), len(states))
    return PointSet(all_times, np.tile(states, (len(times), 1)))
