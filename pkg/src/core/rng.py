"""Keyed counter-based random streams for reproducible parallel sampling.

A stream is identified by (seed, key). The key is a flat tuple of
(tag, index) pairs, so keys are prefix-free and any two distinct keys give
independent Philox streams. Inside a stream the counter addresses
individual variates, which lets any contiguous range of paths be drawn on
its own without touching the rest of the stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np
from scipy.special import ndtri

_WORDS_PER_BLOCK = 4
_UNIFORM_SCALE = 2.0 ** -53


class Tag(IntEnum):
    """Purposes a child stream can be derived for."""
    INCREMENT = 0
    TIME = 1
    EXACT = 2
    LEVEL = 3
    INNER = 4
    ITERATE = 5
    REPLICATION = 6
    SHELL = 7
    PROBE = 8
    START = 9


@dataclass(frozen=True)
class RngStream:
    seed: int
    key: tuple = ()

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if any(int(part) < 0 for part in self.key):
            raise ValueError("stream keys must be unsigned integers")

    def child(self, tag: int, index: int = 0) -> "RngStream":
        """Derived stream with (tag, index) appended to the key."""
        return RngStream(self.seed, self.key + (int(tag), int(index)))

    @cached_property
    def _philox_key(self) -> np.ndarray:
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return sequence.generate_state(2, dtype=np.uint64)

    def raw(self, start: int, count: int) -> np.ndarray:
        """Raw 64-bit words at counter positions [start, start + count)."""
        if start < 0 or count < 0:
            raise ValueError("start and count must be non-negative")
        if count == 0:
            return np.empty(0, dtype=np.uint64)
        block, offset = divmod(start, _WORDS_PER_BLOCK)
        generator = np.random.Philox(key=self._philox_key, counter=block)
        return generator.random_raw(count + offset)[offset:]

    def uniforms(self, start: int, count: int) -> np.ndarray:
        """Uniform variates in the open interval (0, 1)."""
        words = self.raw(start, count) >> np.uint64(11)
        return (words.astype(np.float64) + 0.5) * _UNIFORM_SCALE

    def normals(self, start: int, count: int) -> np.ndarray:
        """Standard normal variates by inverse CDF, one uniform each."""
        return ndtri(self.uniforms(start, count))

    def normal_rows(self, first_row: int, rows: int, width: int) -> np.ndarray:
        """Normals laid out row-major with `width` variates per row."""
        return self.normals(first_row * width, rows * width).reshape(rows, width)
