"""Problem-spec files: strict JSON schema, loading and canonical dumping."""

import hashlib
import json
from pathlib import Path
from typing import Any, Optional, Union

from ..core.expr import parse
from ..core.problem import GROWTH_KINDS, GrowthClass, ProblemSpec
from ..core.sde import SdeCoefficients
from ..utils.exceptions import (
    ConfigurationError,
    ExpressionError,
    ExpressionSyntaxError,
    SchemaError,
)
from ..utils.logging import get_logger
from ..verification.lyapunov import EXPRESSION, FAMILIES, HEAT_KERNEL, POLYNOMIAL, LyapunovSpec

logger = get_logger("config.problem_file")

ADMISSIBILITY_CHECKS = ("coercivity", "lipschitz", "supersolution", "growth_ratio", "heat_type")

REQUIRED_FIELDS = (
    "id", "dimension_d", "noise_m", "horizon", "mu", "sigma", "f", "g",
    "lipschitz_L", "growth", "lyapunov",
)
OPTIONAL_FIELDS = ("reference_solution", "admissibility_profile")
GROWTH_FIELDS = ("kind", "param")
LYAPUNOV_FIELDS = {
    POLYNOMIAL: ("family", "q", "rho"),
    HEAT_KERNEL: ("family", "alpha", "epsilon", "rho"),
    EXPRESSION: ("family", "expr", "rho"),
}


class _Reader:
    """Parses one document, attaching file and line context to every error."""

    def __init__(self, data: Any, source: str, text: Optional[str] = None):
        self.data = data
        self.source = source
        self.text = text

    def line_of(self, key: str) -> Optional[int]:
        if self.text is None:
            return None
        needle = f'"{key}"'
        for number, line in enumerate(self.text.splitlines(), start=1):
            if needle in line:
                return number
        return None

    def context(self, field: str) -> str:
        line = self.line_of(field.split(".")[0].split("[")[0])
        where = f"{self.source}:{line}" if line else self.source
        return f"{where}: field '{field}'"

    def expression(self, field: str, source: Any, d: int, allow_v: bool = False):
        if not isinstance(source, str):
            raise SchemaError(field, "must be an expression string")
        try:
            return parse(source, d, allow_v)
        except ExpressionSyntaxError as e:
            raise e.with_context(self.context(field))
        except ExpressionError as e:
            raise ExpressionError(f"{self.context(field)}: {e}") from e

    @staticmethod
    def number(field: str, value: Any) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(field, "must be a number")
        return float(value)

    @staticmethod
    def integer(field: str, value: Any) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(field, "must be an integer")
        return value

    @staticmethod
    def strict_keys(field: str, block: Any, allowed: tuple) -> dict:
        if not isinstance(block, dict):
            raise SchemaError(field, "must be an object")
        for key in block:
            if key not in allowed:
                raise SchemaError(f"{field}.{key}" if field else key, "unknown field")
        return block


def problem_from_dict(data: Any, source: str = "<problem>", text: Optional[str] = None) -> ProblemSpec:
    """
    Build a ProblemSpec from a parsed document.

    Raises:
        SchemaError: For missing, unknown or mistyped fields
        ExpressionSyntaxError: With file, line and field context
    """
    reader = _Reader(data, source, text)
    reader.strict_keys("", data, REQUIRED_FIELDS + OPTIONAL_FIELDS)
    for key in REQUIRED_FIELDS:
        if key not in data:
            raise SchemaError(key, "required")

    problem_id = data["id"]
    if not isinstance(problem_id, str) or not problem_id:
        raise SchemaError("id", "must be a non-empty string")
    d = reader.integer("dimension_d", data["dimension_d"])
    m = reader.integer("noise_m", data["noise_m"])
    if d < 1:
        raise SchemaError("dimension_d", "must be at least 1")
    if m < 1:
        raise SchemaError("noise_m", "must be at least 1")
    horizon = reader.number("horizon", data["horizon"])
    if horizon <= 0:
        raise SchemaError("horizon", "must be positive")

    mu = data["mu"]
    if not isinstance(mu, list) or len(mu) != d:
        raise SchemaError("mu", f"must be a list of {d} expressions")
    sigma = data["sigma"]
    if (not isinstance(sigma, list) or len(sigma) != d
            or any(not isinstance(row, list) or len(row) != m for row in sigma)):
        raise SchemaError("sigma", f"must be a {d}x{m} list of rows")

    lipschitz = reader.number("lipschitz_L", data["lipschitz_L"])
    if lipschitz < 0:
        raise SchemaError("lipschitz_L", "must be non-negative")

    coefficients = SdeCoefficients(
        d=d,
        m=m,
        mu=tuple(reader.expression(f"mu[{i}]", e, d) for i, e in enumerate(mu)),
        sigma=tuple(tuple(reader.expression(f"sigma[{i}][{j}]", e, d) for j, e in enumerate(row))
                    for i, row in enumerate(sigma)),
        lipschitz_L=lipschitz,
    )

    growth_block = reader.strict_keys("growth", data["growth"], GROWTH_FIELDS)
    for key in GROWTH_FIELDS:
        if key not in growth_block:
            raise SchemaError(f"growth.{key}", "required")
    if growth_block["kind"] not in GROWTH_KINDS:
        raise SchemaError("growth.kind", f"must be one of {list(GROWTH_KINDS)}")
    try:
        growth = GrowthClass(growth_block["kind"], reader.number("growth.param", growth_block["param"]))
    except ValueError as e:
        raise SchemaError("growth", str(e)) from e

    lyapunov = _lyapunov_from_dict(reader, data["lyapunov"], d)

    reference = None
    if data.get("reference_solution") is not None:
        reference = reader.expression("reference_solution", data["reference_solution"], d)

    profile = data.get("admissibility_profile", [])
    if not isinstance(profile, list) or any(name not in ADMISSIBILITY_CHECKS for name in profile):
        raise SchemaError("admissibility_profile", f"must be a list drawn from {list(ADMISSIBILITY_CHECKS)}")

    try:
        return ProblemSpec(
            id=problem_id,
            c=coefficients,
            f=reader.expression("f", data["f"], d, allow_v=True),
            g=reader.expression("g", data["g"], d),
            T=horizon,
            L=lipschitz,
            lyapunov=lyapunov,
            growth=growth,
            reference=reference,
            admissibility_profile=tuple(profile),
        )
    except ValueError as e:
        raise SchemaError("problem", str(e)) from e


def _lyapunov_from_dict(reader: _Reader, block: Any, d: int) -> LyapunovSpec:
    if not isinstance(block, dict):
        raise SchemaError("lyapunov", "must be an object")
    family = block.get("family")
    if family not in FAMILIES:
        raise SchemaError("lyapunov.family", f"must be one of {list(FAMILIES)}")
    reader.strict_keys("lyapunov", block, LYAPUNOV_FIELDS[family])
    for key in LYAPUNOV_FIELDS[family]:
        if key != "rho" and key not in block:
            raise SchemaError(f"lyapunov.{key}", "required")

    rho = reader.number("lyapunov.rho", block.get("rho", 0.0))
    try:
        if family == POLYNOMIAL:
            return LyapunovSpec.polynomial(reader.number("lyapunov.q", block["q"]), rho)
        if family == HEAT_KERNEL:
            return LyapunovSpec.heat_kernel(reader.number("lyapunov.alpha", block["alpha"]),
                                            reader.number("lyapunov.epsilon", block["epsilon"]), rho)
        return LyapunovSpec.from_expression(reader.expression("lyapunov.expr", block["expr"], d), rho)
    except ValueError as e:
        raise SchemaError("lyapunov", str(e)) from e


def problem_to_dict(p: ProblemSpec) -> dict:
    """Document with the exact schema field names; expressions keep their source text."""
    lyapunov = {"family": p.lyapunov.family}
    if p.lyapunov.family == POLYNOMIAL:
        lyapunov["q"] = p.lyapunov.q
    elif p.lyapunov.family == HEAT_KERNEL:
        lyapunov["alpha"] = p.lyapunov.alpha
        lyapunov["epsilon"] = p.lyapunov.epsilon
    else:
        lyapunov["expr"] = p.lyapunov.expression.source
    lyapunov["rho"] = p.lyapunov.rho

    document = {
        "id": p.id,
        "dimension_d": p.d,
        "noise_m": p.c.m,
        "horizon": p.T,
        "mu": [e.source for e in p.c.mu],
        "sigma": [[e.source for e in row] for row in p.c.sigma],
        "f": p.f.source,
        "g": p.g.source,
        "lipschitz_L": p.L,
        "growth": p.growth.to_dict(),
        "lyapunov": lyapunov,
    }
    if p.reference is not None:
        document["reference_solution"] = p.reference.source
    if p.admissibility_profile:
        document["admissibility_profile"] = list(p.admissibility_profile)
    return document


def canonical_json(p: ProblemSpec) -> str:
    return json.dumps(problem_to_dict(p), sort_keys=True, separators=(",", ":"))


def problem_hash(p: ProblemSpec) -> str:
    """Git blob SHA-1 of the canonical problem document."""
    payload = canonical_json(p).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()


def load_problem(path: Union[str, Path]) -> ProblemSpec:
    """
    Load a problem-spec file.

    Raises:
        ConfigurationError: If the file is missing or not valid JSON
        SchemaError: If the document violates the schema
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Problem file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e
    except OSError as e:
        raise ConfigurationError(f"Failed to read problem file {path}: {e}") from e

    problem = problem_from_dict(data, str(path), text)
    logger.debug(f"Loaded problem '{problem.id}' (d={problem.d}) from {path}")
    return problem


def dump_problem(p: ProblemSpec, path: Union[str, Path]) -> Path:
    """Write the problem document as indented JSON."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(problem_to_dict(p), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Failed to write problem file {path}: {e}") from e
    return path
