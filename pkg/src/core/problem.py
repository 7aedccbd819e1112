"""The semilinear Kolmogorov problem: dynamics, nonlinearity, terminal data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import Expression
from .sde import SdeCoefficients

POLYNOMIAL_GROWTH = "polynomial"
GAUSSIAN_GROWTH = "gaussian"
GROWTH_KINDS = (POLYNOMIAL_GROWTH, GAUSSIAN_GROWTH)


@dataclass(frozen=True)
class GrowthClass:
    """|f(t,x,0)| + |g(x)| grows like (1 + |x|)^param or exp(param |x|^2)."""
    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in GROWTH_KINDS:
            raise ValueError(f"growth kind must be one of {GROWTH_KINDS}, got '{self.kind}'")
        if self.param < 0:
            raise ValueError("growth parameter must be non-negative")
        if self.kind == GAUSSIAN_GROWTH and self.param == 0:
            raise ValueError("gaussian growth requires a > 0")

    @property
    def is_gaussian(self) -> bool:
        return self.kind == GAUSSIAN_GROWTH

    def to_dict(self) -> dict:
        return {"kind": self.kind, "param": self.param}


@dataclass(frozen=True)
class ProblemSpec:
    """
    Terminal-value problem
        u_t + 1/2 Tr(sigma sigma* Hess u) + <mu, grad u> + f(t, x, u) = 0,
        u(T, x) = g(x).
    """
    id: str
    c: SdeCoefficients
    f: Expression
    g: Expression
    T: float
    L: float
    lyapunov: object
    growth: GrowthClass
    reference: Optional[Expression] = None
    admissibility_profile: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("horizon must be positive")
        if self.L < 0:
            raise ValueError("lipschitz_L must be non-negative")
        if self.f.dimension != self.d or self.g.dimension != self.d:
            raise ValueError("f and g must be declared over the problem dimension")
        if self.g.uses_v or "t" in self.g.variables:
            raise ValueError("g must depend on x only")
        if self.reference is not None and self.reference.uses_v:
            raise ValueError("reference solution must not reference v")

    @property
    def d(self) -> int:
        return self.c.d

    @property
    def f_depends_on_v(self) -> bool:
        return self.f.uses_v

    @property
    def f_at_zero(self) -> Expression:
        """f(t, x, 0)."""
        return self.f.fix_v(0.0) if self.f.uses_v else self.f

    def f_values(self, t, x: np.ndarray, v, counter=None) -> np.ndarray:
        return self.f.evaluate_batch(t, x, v if self.f.uses_v else None, counter=counter)

    def g_values(self, x: np.ndarray, counter=None) -> np.ndarray:
        return self.g.evaluate_batch(self.T, x, counter=counter)

    def reference_values(self, t, x: np.ndarray) -> np.ndarray:
        if self.reference is None:
            raise ValueError(f"problem '{self.id}' has no reference solution")
        return self.reference.evaluate_batch(t, x)
