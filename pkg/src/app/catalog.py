"""Built-in problem catalog."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..config.problem_file import dump_problem, problem_from_dict
from ..core.oracle import DIRICHLET_EXACT, EXTRAPOLATE_LINEAR, interior_half
from ..core.problem import ProblemSpec
from ..utils.logging import get_logger

logger = get_logger("app.catalog")

STANDARD_PROFILE = ["coercivity", "lipschitz", "supersolution", "growth_ratio"]


@dataclass(frozen=True)
class OracleDomain:
    x_min: float
    x_max: float
    boundary: str


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    problem: ProblemSpec
    description: str
    oracle_domain: Optional[OracleDomain] = None

    @property
    def reference_solution(self):
        return self.problem.reference

    @property
    def admissibility_profile(self) -> tuple:
        return self.problem.admissibility_profile


def _squared_norm(d: int) -> str:
    return " + ".join(f"x{i}^2" for i in range(1, d + 1))


def _identity(d: int) -> list:
    return [["1" if i == j else "0" for j in range(d)] for i in range(d)]


def _documents() -> List[tuple]:
    d = 10
    heat_quadratic = {
        "id": "heat_quadratic",
        "dimension_d": d,
        "noise_m": d,
        "horizon": 1.0,
        "mu": ["0"] * d,
        "sigma": _identity(d),
        "f": "0",
        "g": _squared_norm(d),
        "lipschitz_L": 1.0,
        "growth": {"kind": "polynomial", "param": 2.0},
        "lyapunov": {"family": "polynomial", "q": 4.0, "rho": 20.0},
        "reference_solution": f"{_squared_norm(d)} + {d}*(1 - t)",
        "admissibility_profile": STANDARD_PROFILE,
    }
    lambda_reaction = {
        "id": "lambda_reaction",
        "dimension_d": 1,
        "noise_m": 1,
        "horizon": 1.0,
        "mu": ["0"],
        "sigma": [["1"]],
        "f": "1*v",
        "g": "x1^2",
        "lipschitz_L": 1.0,
        "growth": {"kind": "polynomial", "param": 2.0},
        "lyapunov": {"family": "polynomial", "q": 4.0, "rho": 2.5},
        "reference_solution": "exp(1*(1 - t))*(x1^2 + (1 - t))",
        "admissibility_profile": STANDARD_PROFILE,
    }
    deterministic_exp = {
        "id": "deterministic_exp",
        "dimension_d": 1,
        "noise_m": 1,
        "horizon": 1.0,
        "mu": ["0"],
        "sigma": [["0"]],
        "f": "v",
        "g": "1",
        "lipschitz_L": 1.0,
        "growth": {"kind": "polynomial", "param": 0.0},
        "lyapunov": {"family": "polynomial", "q": 2.0, "rho": 0.0},
        "reference_solution": "exp(1 - t)",
        "admissibility_profile": STANDARD_PROFILE,
    }
    heat_sin_1d = {
        "id": "heat_sin_1d",
        "dimension_d": 1,
        "noise_m": 1,
        "horizon": 1.0,
        "mu": ["0"],
        "sigma": [["sqrt(2)"]],
        "f": "0",
        "g": "sin(x1)",
        "lipschitz_L": 1.5,
        "growth": {"kind": "gaussian", "param": 0.1},
        "lyapunov": {"family": "heat_kernel", "alpha": 2.0, "epsilon": 1.0, "rho": 0.0},
        "reference_solution": "exp(-(1 - t))*sin(x1)",
        "admissibility_profile": STANDARD_PROFILE + ["heat_type"],
    }
    allen_cahn_trunc = {
        "id": "allen_cahn_trunc",
        "dimension_d": 1,
        "noise_m": 1,
        "horizon": 1.0,
        "mu": ["0"],
        "sigma": [["1"]],
        "f": "v - clip(v, -1, 1)^3",
        "g": "1/(1 + x1^2)",
        "lipschitz_L": 4.0,
        "growth": {"kind": "polynomial", "param": 0.0},
        "lyapunov": {"family": "polynomial", "q": 4.0, "rho": 2.5},
        "admissibility_profile": STANDARD_PROFILE,
    }
    sine_reaction = {
        "id": "sine_reaction",
        "dimension_d": 2,
        "noise_m": 2,
        "horizon": 1.0,
        "mu": ["0", "0"],
        "sigma": _identity(2),
        "f": "sin(v)",
        "g": "cos(x1)*cos(x2)",
        "lipschitz_L": 1.0,
        "growth": {"kind": "polynomial", "param": 0.0},
        "lyapunov": {"family": "polynomial", "q": 2.0, "rho": 2.0},
        "admissibility_profile": STANDARD_PROFILE,
    }
    gbm_linear = {
        "id": "gbm_linear",
        "dimension_d": 1,
        "noise_m": 1,
        "horizon": 1.0,
        "mu": ["0.05*x1"],
        "sigma": [["0.2*x1"]],
        "f": "-0.05*v",
        "g": "x1",
        "lipschitz_L": 0.25,
        "growth": {"kind": "polynomial", "param": 1.0},
        "lyapunov": {"family": "polynomial", "q": 2.0, "rho": 0.14},
        "reference_solution": "x1",
        "admissibility_profile": STANDARD_PROFILE,
    }
    return [
        (heat_quadratic, "Heat equation in d=10 with quadratic terminal data", None),
        (lambda_reaction, "Linear reaction f = lambda v on Brownian motion", None),
        (deterministic_exp, "Degenerate ODE case, Picard iterates are the exponential series", None),
        (heat_sin_1d, "u_t + u_xx = 0 with sin terminal data",
         OracleDomain(-math.pi, math.pi, DIRICHLET_EXACT)),
        (allen_cahn_trunc, "Allen-Cahn reaction with the cubic truncated to stay Lipschitz",
         OracleDomain(-4.0, 4.0, EXTRAPOLATE_LINEAR)),
        (sine_reaction, "Bounded Lipschitz reaction sin(v) in d=2", None),
        (gbm_linear, "Geometric Brownian motion with discounting", None),
    ]


def _build() -> Dict[str, CatalogEntry]:
    entries = {}
    for document, description, domain in _documents():
        problem = problem_from_dict(document, source=f"catalog:{document['id']}")
        entries[problem.id] = CatalogEntry(problem.id, problem, description, domain)
    return entries


_CATALOG: Optional[Dict[str, CatalogEntry]] = None


def catalog() -> Dict[str, CatalogEntry]:
    global _CATALOG
    if _CATALOG is None:
        _CATALOG = _build()
    return _CATALOG


def get_entry(problem_id: str) -> CatalogEntry:
    entries = catalog()
    if problem_id not in entries:
        raise KeyError(f"unknown catalog problem '{problem_id}' (known: {', '.join(entries)})")
    return entries[problem_id]


def export_catalog(directory: Path) -> List[Path]:
    """Write every entry as <id>.json in the directory."""
    directory = Path(directory)
    paths = [dump_problem(entry.problem, directory / f"{entry.id}.json") for entry in catalog().values()]
    logger.info(f"Exported {len(paths)} catalog problems to {directory}")
    return paths


def standard_probes(entry: CatalogEntry, count: int = 5) -> List[tuple]:
    """
    Five query points per problem. One-dimensional problems with an oracle
    domain place them at t = 0 across the interior half of that domain.
    """
    d = entry.problem.d
    if entry.oracle_domain is not None:
        xs = np.linspace(*interior_half(entry.oracle_domain), count)
        return [(0.0, np.array([x])) for x in xs]

    T = entry.problem.T
    ones = np.ones(d)
    candidates = [
        (0.0, np.zeros(d)),
        (0.0, 0.5 * ones),
        (0.5 * T, np.zeros(d)),
        (0.25 * T, -0.5 * ones),
        (0.5 * T, ones / math.sqrt(d)),
    ]
    return candidates[:count]
