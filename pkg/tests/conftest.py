"""Shared fixtures for the solver test suite."""

import numpy as np
import pytest

from src.core.rng import RngStream
from src.core.sde import SdeCoefficients
from src.system.parallel import BatchRunner

TEST_SEED = 1234


@pytest.fixture
def rng():
    return RngStream(TEST_SEED)


@pytest.fixture
def threaded():
    """Four workers with small chunks so every batch really is split."""
    return BatchRunner(threads=4, chunk_size=64)


def brownian(d: int, scale: str = "1", L: float = 1.0) -> SdeCoefficients:
    """mu = 0, sigma = scale * I_d."""
    sigma = [[scale if i == j else "0" for j in range(d)] for i in range(d)]
    return SdeCoefficients.from_strings(["0"] * d, sigma, L)


def identity_points(d: int, count: int, stream: RngStream, radius: float = 5.0) -> np.ndarray:
    """count points uniform in the cube [-radius, radius]^d."""
    return radius * (2.0 * stream.uniforms(0, count * d).reshape(count, d) - 1.0)


ENV_KEYS = ("SFPE_SEED", "SFPE_THREADS", "SFPE_OUT_DIR", "SFPE_WORK_BUDGET", "SFPE_LOG_LEVEL")


@pytest.fixture
def clean_environment(monkeypatch, tmp_path):
    """No SFPE_* variables during or after the test; tmp_path is the working directory."""
    for key in ENV_KEYS:
        # set first so teardown also removes whatever a loaded .env file wrote
        monkeypatch.setenv(key, "")
        monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)
