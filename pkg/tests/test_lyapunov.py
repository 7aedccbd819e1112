import math

import numpy as np
import pytest

from src.core.expr import parse
from src.core.rng import Tag
from src.core.sde import SdeCoefficients
from src.utils.exceptions import ConfigurationError, DomainError, ValueOverflowError
from src.verification.lyapunov import (
    LyapunovSpec,
    generator_apply,
    generator_batch,
    v_value,
)

from .conftest import brownian, identity_points

HEAT_1D_SOURCE = "exp(x1^2/(2*(2*t + 1)))/sqrt(2*3.141592653589793*(2*t + 1))"


def ball(stream, count, d, radius=5.0):
    z = stream.normal_rows(0, count, d)
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * (radius * stream.child(Tag.SHELL).uniforms(0, count) ** (1.0 / d))[:, None]


class TestValues:
    def test_heat_kernel_at_origin(self):
        assert v_value(LyapunovSpec.heat_kernel(1.0, 1.0), 0.0, [0.0]) == pytest.approx(0.3989423, abs=1e-7)

    def test_polynomial(self):
        assert v_value(LyapunovSpec.polynomial(2.0), 0.0, [3.0, 4.0]) == pytest.approx(26.0)
        assert v_value(LyapunovSpec.polynomial(4.0), 0.7, [0.0]) == 1.0

    def test_expression(self):
        spec = LyapunovSpec.from_expression(parse("1 + x1^2 + t", 1))
        assert v_value(spec, 0.5, [2.0]) == pytest.approx(5.5)

    def test_overflow_is_explicit(self):
        spec = LyapunovSpec.heat_kernel(0.0, 1.0)
        with pytest.raises(ValueOverflowError):
            v_value(spec, 0.0, [50.0])
        assert np.isfinite(spec.log_values(0.0, np.array([[50.0]]))[0])

    def test_nonpositive_expression(self):
        spec = LyapunovSpec.from_expression(parse("x1", 1))
        with pytest.raises(DomainError):
            v_value(spec, 0.0, [-1.0])

    def test_discounted(self):
        spec = LyapunovSpec.polynomial(2.0, rho=0.5).discounted()
        assert v_value(spec, 2.0, [1.0]) == pytest.approx(2.0 * math.exp(-1.0))

    @pytest.mark.parametrize("kwargs", [
        {"family": "polynomial", "q": 0.0},
        {"family": "heat_kernel", "alpha": 1.0, "epsilon": 0.0},
        {"family": "heat_kernel", "alpha": -1.0, "epsilon": 1.0},
        {"family": "expression"},
        {"family": "polynomial", "q": 2.0, "rho": -1.0},
        {"family": "quadratic", "q": 2.0},
    ])
    def test_invalid_specs(self, kwargs):
        with pytest.raises(ValueError):
            LyapunovSpec(**kwargs)


class TestGenerator:
    def test_polynomial_laplacian_is_dimension(self, rng):
        x = identity_points(3, 50, rng)
        generator, _ = generator_batch(LyapunovSpec.polynomial(2.0), brownian(3), rng.uniforms(0, 50), x)
        np.testing.assert_allclose(generator, 3.0, atol=1e-8)

    def test_polynomial_closed_form(self, rng):
        q, d = 4.0, 3
        x = identity_points(d, 40, rng, radius=10.0 / math.sqrt(d))
        generator, _ = generator_batch(LyapunovSpec.polynomial(q), brownian(d), np.zeros(40), x)
        r2 = np.sum(x * x, axis=1)
        exact = 0.5 * q * (d + (q - 2.0) * r2 / (1.0 + r2)) * (1.0 + r2) ** (0.5 * q - 1.0)
        np.testing.assert_allclose(generator, exact, rtol=1e-10)

    def test_heat_kernel_vanishes_when_diffusion_matches(self, rng):
        spec = LyapunovSpec.heat_kernel(1.0, 1.0)
        x = ball(rng, 100, 2)
        t = rng.child(Tag.TIME).uniforms(0, 100)
        generator, value = generator_batch(spec, brownian(2), t, x)
        assert np.all(np.abs(generator) <= 1e-10 * np.maximum(1.0, value))

    def test_heat_kernel_finite_difference_cross_check(self, rng):
        closed = LyapunovSpec.heat_kernel(2.0, 1.0)
        numeric = LyapunovSpec.from_expression(parse(HEAT_1D_SOURCE, 1))
        c = brownian(1, "sqrt(2)")
        x = ball(rng, 100, 1, radius=3.0)
        t = rng.child(Tag.TIME).uniforms(0, 100)
        g_closed, value = generator_batch(closed, c, t, x)
        g_numeric, _ = generator_batch(numeric, c, t, x)
        assert np.max(np.abs(g_numeric - g_closed) / value) <= 1e-4
        np.testing.assert_allclose(numeric.values(t, x), value, rtol=1e-12)

    def test_heat_kernel_identity(self, rng):
        alpha, epsilon, c_bar, d = 2.0, 1.0, 0.5, 2
        spec = LyapunovSpec.heat_kernel(alpha, epsilon)
        x = ball(rng, 50, d)
        t = rng.child(Tag.TIME).uniforms(0, 50)
        generator, value = generator_batch(spec, brownian(d, f"sqrt({c_bar})"), t, x)
        s = alpha * t + epsilon
        r2 = np.sum(x * x, axis=1)
        exact = (c_bar - alpha) * (d / (2 * s) + r2 / (2 * s * s)) * value
        np.testing.assert_allclose(generator, exact, rtol=1e-8)

    def test_heat_kernel_is_supersolution_below_alpha(self, rng):
        spec = LyapunovSpec.heat_kernel(2.0, 1.0)
        assert generator_apply(spec, brownian(1), 0.0, [1.0]) < 0
        x = ball(rng, 100, 3)
        generator, _ = generator_batch(spec, brownian(3), rng.child(Tag.TIME).uniforms(0, 100), x)
        assert np.all(generator <= 0)

    def test_expression_matches_polynomial(self, rng):
        gbm = SdeCoefficients.from_strings(["x1"], [["x1"]])
        numeric = LyapunovSpec.from_expression(parse("1 + x1^2", 1))
        x = identity_points(1, 30, rng, radius=3.0)
        g_closed, value = generator_batch(LyapunovSpec.polynomial(2.0), gbm, np.zeros(30), x)
        g_numeric, _ = generator_batch(numeric, gbm, np.zeros(30), x)
        np.testing.assert_allclose(g_closed, 3.0 * x[:, 0] ** 2, rtol=1e-12, atol=1e-12)
        assert np.max(np.abs(g_numeric - g_closed) / value) <= 1e-4

    def test_discounted_generator(self):
        spec = LyapunovSpec.polynomial(2.0)
        discounted = spec.discounted(3.0)
        t = 0.4
        expected = math.exp(-3.0 * t) * (3.0 - 3.0 * (1.0 + 2.0))
        assert generator_apply(discounted, brownian(3), t, [1.0, 1.0, 0.0]) == pytest.approx(expected)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            generator_apply(LyapunovSpec.polynomial(2.0), brownian(2), 0.0, [1.0])
