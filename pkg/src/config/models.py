"""Configuration data models."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

from ..core.quadrature import TimeRule

DEFAULT_SEED = 20240601
DEFAULT_WORK_BUDGET = 1e8


@dataclass
class RuntimeConfig:
    """Process-wide settings from the environment and global CLI flags."""
    seed: int = DEFAULT_SEED
    threads: int = 1
    out_dir: Path = Path("runs")
    work_budget: float = DEFAULT_WORK_BUDGET
    log_level: str = "INFO"
    force: bool = False
    output_format: Literal["json", "csv"] = "json"

    def __post_init__(self):
        """Validate runtime configuration after initialization."""
        self.out_dir = Path(self.out_dir)
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("SFPE_SEED must be a 64-bit unsigned integer")

        if self.threads < 1:
            raise ValueError("SFPE_THREADS must be at least 1")

        if self.work_budget <= 0:
            raise ValueError("SFPE_WORK_BUDGET must be positive")

        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"SFPE_LOG_LEVEL '{self.log_level}' is not a logging level")

        if self.output_format not in ("json", "csv"):
            raise ValueError("format must be 'json' or 'csv'")


@dataclass
class PicardConfig:
    """Nested Monte-Carlo Picard iteration."""
    iterations: int
    samples: int
    sde_steps: int = 1
    inner_samples: Optional[int] = None
    v0: Literal["zero", "terminal_g"] = "zero"
    time_rule: TimeRule = field(default_factory=TimeRule.uniform)
    scheme: Optional[str] = None
    work_budget: float = DEFAULT_WORK_BUDGET

    def __post_init__(self):
        """Validate Picard configuration after initialization."""
        if self.iterations < 1:
            raise ValueError("iterations K must be at least 1")

        if self.samples < 1:
            raise ValueError("samples M must be at least 1")

        if self.sde_steps < 1:
            raise ValueError("sde_steps must be at least 1")

        if self.inner_samples is None:
            self.inner_samples = self.samples
        elif self.inner_samples < 1:
            raise ValueError("inner_samples must be at least 1")

        if self.v0 not in ("zero", "terminal_g"):
            raise ValueError("v0 must be 'zero' or 'terminal_g'")

    def to_dict(self) -> dict:
        return {
            "method": "picard",
            "K": self.iterations,
            "M": self.samples,
            "inner_M": self.inner_samples,
            "sde_steps": self.sde_steps,
            "v0": self.v0,
            "time_rule": self.time_rule.label(),
            "scheme": self.scheme or "auto",
        }


@dataclass
class MlpConfig:
    """Full-history multilevel Picard estimator."""
    levels: int
    samples: int
    sde_steps: int = 1
    replications: int = 16
    time_rule: TimeRule = field(default_factory=TimeRule.uniform)
    scheme: Optional[str] = None
    work_budget: float = DEFAULT_WORK_BUDGET

    def __post_init__(self):
        """Validate MLP configuration after initialization."""
        if not (1 <= self.levels <= 6):
            raise ValueError("levels n must be between 1 and 6")

        if self.samples < 2:
            raise ValueError("samples M must be at least 2")

        if self.sde_steps < 1:
            raise ValueError("sde_steps must be at least 1")

        if self.replications < 1:
            raise ValueError("replications must be at least 1")

    def to_dict(self) -> dict:
        return {
            "method": "mlp",
            "n": self.levels,
            "M": self.samples,
            "sde_steps": self.sde_steps,
            "replications": self.replications,
            "time_rule": self.time_rule.label(),
            "scheme": self.scheme or "auto",
        }


@dataclass
class StudySweep:
    """Parameter grid of a convergence study; unset axes keep the base value."""
    samples: tuple = ()
    depths: tuple = ()
    sde_steps: tuple = ()

    def __post_init__(self):
        """Validate sweep after initialization."""
        self.samples = tuple(int(v) for v in self.samples)
        self.depths = tuple(int(v) for v in self.depths)
        self.sde_steps = tuple(int(v) for v in self.sde_steps)
        if not (self.samples or self.depths or self.sde_steps):
            raise ValueError("study sweep is empty")

        if any(v < 1 for v in self.samples + self.depths + self.sde_steps):
            raise ValueError("sweep values must be positive")

    def __len__(self) -> int:
        return max(1, len(self.samples)) * max(1, len(self.depths)) * max(1, len(self.sde_steps))
