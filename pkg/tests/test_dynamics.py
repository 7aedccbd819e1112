import math

import numpy as np
import pytest

from src.core.sde import EULER, PathPlan, SdeCoefficients
from src.verification.admissibility import fit_supersolution_rate
from src.verification.dynamics import (
    FROBENIUS,
    SPECTRAL,
    coercivity_check,
    stability_bound,
    stability_bound_test,
    supermartingale_test,
)
from src.verification.lyapunov import LyapunovSpec
from src.verification.sampling import ball_points, lattice_points

from .conftest import brownian

ORNSTEIN_UHLENBECK = SdeCoefficients.from_strings(["-x1"], [["1"]], 1.0)
GBM = SdeCoefficients.from_strings(["0.05*x1"], [["0.2*x1"]], 0.25)


class TestCoercivity:
    def test_ornstein_uhlenbeck_passes(self):
        report = coercivity_check(ORNSTEIN_UHLENBECK, 1.0, lattice_points(1, 10.0, 41))
        assert report.passed
        assert report.norm == SPECTRAL

    def test_brownian_motion_in_ten_dimensions(self, rng):
        report = coercivity_check(brownian(10), 1.0, ball_points(10, 10.0, 200, rng))
        assert report.passed
        assert report.max_diffusion_violation <= 0

    def test_cubic_drift_fails_with_witness(self):
        c = SdeCoefficients.from_strings(["x1^3"], [["1"]], 1.0)
        report = coercivity_check(c, 1.0, lattice_points(1, 10.0, 41))
        assert not report.passed
        assert report.max_drift_violation > 0
        assert abs(report.drift_witness["x"][0]) == pytest.approx(10.0)
        assert report.to_dict()["pass"] is False

    def test_state_dependent_diffusion_uses_frobenius(self):
        report = coercivity_check(GBM, 0.25, lattice_points(1, 10.0, 41))
        assert report.norm == FROBENIUS
        assert report.passed

    def test_spectral_norm_is_tighter_than_frobenius(self):
        c = brownian(4, "1")
        # Frobenius norm of the identity is 2 > 1 + |0| with L = 1
        assert coercivity_check(c, 1.0, lattice_points(4, 1.0, 3)).passed


class TestStability:
    def test_bound_value(self):
        assert stability_bound(0.1, 1.0, 1.0) == pytest.approx(0.08 * math.exp(8.0), rel=1e-12)
        assert stability_bound(0.1, 1.0, 1.0) == pytest.approx(238.48, abs=0.01)

    @pytest.mark.parametrize("gap", [0.0, 0.1, 1.0])
    def test_coupled_paths_respect_bound(self, rng, gap):
        plan = PathPlan(0.0, 1.0, 20, EULER)
        report = stability_bound_test(ORNSTEIN_UHLENBECK, gap, 1000, plan, rng)
        assert report.passed
        if gap == 0.0:
            assert report.estimate.value == 0.0
        assert report.to_dict()["bound"] == pytest.approx(stability_bound(gap, 1.0, 1.0))

    def test_gap_grows_mean_squared_difference(self, rng):
        plan = PathPlan(0.0, 1.0, 20, EULER)
        small = stability_bound_test(ORNSTEIN_UHLENBECK, 0.1, 200, plan, rng)
        large = stability_bound_test(ORNSTEIN_UHLENBECK, 1.0, 200, plan, rng)
        assert large.estimate.value > small.estimate.value > 0

    def test_thread_count_does_not_change_result(self, rng, threaded):
        plan = PathPlan(0.0, 1.0, 10, EULER)
        serial = stability_bound_test(GBM, 0.5, 300, plan, rng, x0=[1.0])
        parallel = stability_bound_test(GBM, 0.5, 300, plan, rng, x0=[1.0], runner=threaded)
        assert serial.estimate.value == parallel.estimate.value

    def test_invalid_arguments(self, rng):
        plan = PathPlan(0.0, 1.0, 4)
        with pytest.raises(ValueError):
            stability_bound_test(ORNSTEIN_UHLENBECK, -0.1, 100, plan, rng)
        with pytest.raises(ValueError):
            stability_bound_test(ORNSTEIN_UHLENBECK, 0.1, 1, plan, rng)


class TestSupermartingale:
    def test_discounted_lyapunov_of_gbm(self, rng):
        rho_hat, _ = fit_supersolution_rate(LyapunovSpec.polynomial(2.0), GBM, lattice_points(1, 10.0, 81))
        spec = LyapunovSpec.polynomial(2.0, rho=rho_hat).discounted()
        report = supermartingale_test(spec, GBM, [1.0], (0.25, 0.5, 1.0), 10_000, 20, rng)
        assert report.passed
        assert report.initial_value == pytest.approx(2.0)
        assert [row["t"] for row in report.rows] == pytest.approx([0.25, 0.5, 1.0])

    def test_undiscounted_lyapunov_of_brownian_motion_fails(self, rng):
        report = supermartingale_test(LyapunovSpec.polynomial(2.0), brownian(1), [0.0], (1.0,), 10_000, 10, rng)
        assert not report.passed
        assert report.rows[0]["value"] == pytest.approx(2.0, abs=0.1)

    def test_stopping_freezes_paths(self, rng):
        spec = LyapunovSpec.polynomial(2.0, rho=2.0).discounted()
        report = supermartingale_test(spec, brownian(2), np.zeros(2), (0.5, 1.0), 2000, 20, rng,
                                      stop_level=4.0)
        assert report.passed
        assert all(row["value"] < 1.0 for row in report.rows)

    def test_invalid_check_times(self, rng):
        with pytest.raises(ValueError):
            supermartingale_test(LyapunovSpec.polynomial(2.0), brownian(1), [0.0], (), 10, 2, rng)
        with pytest.raises(ValueError):
            supermartingale_test(LyapunovSpec.polynomial(2.0), brownian(1), [0.0], (0.0,), 10, 2, rng)
