"""Lyapunov function families and the parabolic generator applied to them."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ..core.expr import Expression
from ..core.sde import SdeCoefficients
from ..utils.exceptions import ConfigurationError, DomainError, ValueOverflowError

POLYNOMIAL = "polynomial"
HEAT_KERNEL = "heat_kernel"
EXPRESSION = "expression"
FAMILIES = (POLYNOMIAL, HEAT_KERNEL, EXPRESSION)

# log of the largest finite double
LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class LyapunovSpec:
    """
    A positive function V(t, x) together with its declared supersolution rate.

    `discount` turns V into e^{-discount t} V(t, x); the discounted function
    has generator e^{-discount t} (G V - discount V).
    """
    family: str
    q: Optional[float] = None
    alpha: Optional[float] = None
    epsilon: Optional[float] = None
    expression: Optional[Expression] = None
    rho: float = 0.0
    discount: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"Lyapunov family must be one of {FAMILIES}, got '{self.family}'")
        if self.family == POLYNOMIAL and (self.q is None or self.q <= 0):
            raise ValueError("polynomial Lyapunov family requires q > 0")
        if self.family == HEAT_KERNEL:
            if self.alpha is None or self.alpha < 0:
                raise ValueError("heat_kernel Lyapunov family requires alpha >= 0")
            if self.epsilon is None or self.epsilon <= 0:
                raise ValueError("heat_kernel Lyapunov family requires epsilon > 0")
        if self.family == EXPRESSION:
            if self.expression is None:
                raise ValueError("expression Lyapunov family requires an expression")
            if self.expression.uses_v:
                raise ValueError("a Lyapunov expression must not reference v")
        if self.rho < 0 or self.discount < 0:
            raise ValueError("rho and discount must be non-negative")

    @classmethod
    def polynomial(cls, q: float, rho: float = 0.0) -> "LyapunovSpec":
        return cls(POLYNOMIAL, q=float(q), rho=float(rho))

    @classmethod
    def heat_kernel(cls, alpha: float, epsilon: float, rho: float = 0.0) -> "LyapunovSpec":
        return cls(HEAT_KERNEL, alpha=float(alpha), epsilon=float(epsilon), rho=float(rho))

    @classmethod
    def from_expression(cls, expression: Expression, rho: float = 0.0) -> "LyapunovSpec":
        return cls(EXPRESSION, expression=expression, rho=float(rho))

    def discounted(self, rate: Optional[float] = None) -> "LyapunovSpec":
        """The function e^{-rate t} V; rate defaults to the declared rho."""
        return replace(self, discount=float(self.rho if rate is None else rate))

    def with_rho(self, rho: float) -> "LyapunovSpec":
        return replace(self, rho=float(rho))

    @property
    def uses_finite_differences(self) -> bool:
        return self.family == EXPRESSION

    def params(self) -> dict:
        if self.family == POLYNOMIAL:
            params = {"q": self.q}
        elif self.family == HEAT_KERNEL:
            params = {"alpha": self.alpha, "epsilon": self.epsilon}
        else:
            params = {"expr": self.expression.source}
        params["rho"] = self.rho
        if self.discount:
            params["discount"] = self.discount
        return params

    def log_values(self, t, x: np.ndarray) -> np.ndarray:
        """log V at N points; never overflows for the closed-form families."""
        t, x = _as_batch(t, x)
        if self.family == POLYNOMIAL:
            logs = 0.5 * self.q * np.log1p(np.sum(x * x, axis=1))
        elif self.family == HEAT_KERNEL:
            s = self.alpha * t + self.epsilon
            d = x.shape[1]
            logs = -0.5 * d * np.log(2.0 * math.pi * s) + np.sum(x * x, axis=1) / (2.0 * s)
        else:
            values = self.expression.evaluate_batch(t, x)
            if np.any(values <= 0):
                raise DomainError(f"Lyapunov expression '{self.expression.source}' is not positive")
            logs = np.log(values)
        return logs - self.discount * t

    def values(self, t, x: np.ndarray) -> np.ndarray:
        """
        V at N points.

        Raises:
            ValueOverflowError: If V exceeds the floating-point range
        """
        t, x = _as_batch(t, x)
        if self.family == EXPRESSION:
            base = self.expression.evaluate_batch(t, x)
            if np.any(base <= 0):
                raise DomainError(f"Lyapunov expression '{self.expression.source}' is not positive")
            return base * np.exp(-self.discount * t)

        logs = self.log_values(t, x)
        if np.any(logs > LOG_MAX):
            worst = int(np.argmax(logs))
            raise ValueOverflowError(
                f"{self.family} Lyapunov function overflows at t={t[worst]:.6g}, "
                f"|x|={np.linalg.norm(x[worst]):.6g} (log V = {logs[worst]:.6g})"
            )
        if self.family == POLYNOMIAL:
            return np.power(1.0 + np.sum(x * x, axis=1), 0.5 * self.q) * np.exp(-self.discount * t)
        return np.exp(logs)

    def derivatives(self, t, x: np.ndarray) -> tuple:
        """
        V, dV/dt, gradient and Hessian in x at N points.

        Returns:
            (V of shape (N,), dV/dt of shape (N,), grad of shape (N, d),
            hess of shape (N, d, d)); the built-in families use closed forms,
            expressions use central differences with step 1e-4 (1 + |x|)
        """
        t, x = _as_batch(t, x)
        if self.family == POLYNOMIAL:
            value, dt, grad, hess = _polynomial_derivatives(self.q, x)
        elif self.family == HEAT_KERNEL:
            value, dt, grad, hess = _heat_kernel_derivatives(self, t, x)
        else:
            value, dt, grad, hess = _finite_difference_derivatives(self.expression, t, x)

        if self.discount:
            weight = np.exp(-self.discount * t)
            dt = weight * (dt - self.discount * value)
            value = weight * value
            grad = grad * weight[:, None]
            hess = hess * weight[:, None, None]
        return value, dt, grad, hess


def _as_batch(t, x) -> tuple:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],)).astype(float)
    return t, x


def _polynomial_derivatives(q: float, x: np.ndarray) -> tuple:
    count, d = x.shape
    base = 1.0 + np.sum(x * x, axis=1)
    if np.any(0.5 * q * np.log(base) > LOG_MAX):
        raise ValueOverflowError("polynomial Lyapunov function overflows")
    value = base ** (0.5 * q)
    first = q * base ** (0.5 * q - 1.0)
    second = q * (q - 2.0) * base ** (0.5 * q - 2.0)
    grad = first[:, None] * x
    hess = (first[:, None, None] * np.eye(d)[None]
            + second[:, None, None] * np.einsum("ni,nj->nij", x, x))
    return value, np.zeros(count), grad, hess


def _heat_kernel_derivatives(spec: LyapunovSpec, t: np.ndarray, x: np.ndarray) -> tuple:
    d = x.shape[1]
    s = spec.alpha * t + spec.epsilon
    r2 = np.sum(x * x, axis=1)
    value = replace(spec, discount=0.0).values(t, x)
    dt = spec.alpha * (-d / (2.0 * s) - r2 / (2.0 * s * s)) * value
    grad = x * (value / s)[:, None]
    hess = (np.einsum("ni,nj->nij", x, x) / (s * s)[:, None, None]
            + np.eye(d)[None] / s[:, None, None]) * value[:, None, None]
    return value, dt, grad, hess


def _finite_difference_derivatives(expression: Expression, t: np.ndarray, x: np.ndarray) -> tuple:
    count, d = x.shape
    h = 1e-4 * (1.0 + np.linalg.norm(x, axis=1))

    def at(tt, xx):
        values = expression.evaluate_batch(tt, xx)
        if np.any(values <= 0):
            raise DomainError(f"Lyapunov expression '{expression.source}' is not positive")
        return values

    value = at(t, x)
    dt = (at(t + h, x) - at(t - h, x)) / (2.0 * h)

    grad = np.empty((count, d))
    hess = np.empty((count, d, d))
    plus = np.empty((d, count))
    minus = np.empty((d, count))
    for i in range(d):
        shift = np.zeros((count, d))
        shift[:, i] = h
        plus[i] = at(t, x + shift)
        minus[i] = at(t, x - shift)
        grad[:, i] = (plus[i] - minus[i]) / (2.0 * h)
        hess[:, i, i] = (plus[i] - 2.0 * value + minus[i]) / (h * h)

    for i in range(d):
        for j in range(i + 1, d):
            ei = np.zeros((count, d))
            ej = np.zeros((count, d))
            ei[:, i] = h
            ej[:, j] = h
            mixed = (at(t, x + ei + ej) - at(t, x + ei - ej)
                     - at(t, x - ei + ej) + at(t, x - ei - ej)) / (4.0 * h * h)
            hess[:, i, j] = mixed
            hess[:, j, i] = mixed
    return value, dt, grad, hess


def generator_batch(spec: LyapunovSpec, c: SdeCoefficients, t, x: np.ndarray) -> tuple:
    """
    dV/dt + 1/2 Tr(sigma sigma* Hess V) + <mu, grad V> at N points.

    Returns:
        (generator values, V values), both of shape (N,)
    """
    t, x = _as_batch(t, x)
    if x.shape[1] != c.d:
        raise ConfigurationError(f"points have dimension {x.shape[1]}, coefficients have {c.d}")
    value, dt, grad, hess = spec.derivatives(t, x)
    drift = c.drift(t, x)
    diffusion = c.diffusion(t, x)
    covariance = np.einsum("nim,njm->nij", diffusion, diffusion)
    generator = dt + 0.5 * np.einsum("nij,nji->n", covariance, hess) + np.sum(drift * grad, axis=1)
    return generator, value


def v_value(spec: LyapunovSpec, t: float, x: Sequence[float]) -> float:
    return float(spec.values(np.array([float(t)]), np.asarray(x, dtype=float).reshape(1, -1))[0])


def generator_apply(spec: LyapunovSpec, c: SdeCoefficients, t: float, x: Sequence[float]) -> float:
    generator, _ = generator_batch(spec, c, np.array([float(t)]),
                                   np.asarray(x, dtype=float).reshape(1, -1))
    return float(generator[0])
