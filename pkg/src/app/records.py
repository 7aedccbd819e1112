"""Run records: one directory per run with record.json and optional CSVs."""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from ..utils.exceptions import ConfigurationError
from ..utils.logging import get_logger

logger = get_logger("app.records")


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")


@dataclass
class RunRecord:
    command: str
    problem_id: str
    problem_hash: str
    config: dict
    results: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    forced: bool = False
    run_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    files: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "timestamp": self.timestamp,
            "command": self.command,
            "problem_id": self.problem_id,
            "problem_hash": self.problem_hash,
            "forced": self.forced,
            "config": self.config,
            "results": self.results,
            "environment": self.environment,
            "files": self.files,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)

    def run_dir(self, out_dir: Path) -> Path:
        return Path(out_dir) / f"{self.command}-{self.problem_id}-{self.run_id}"

    def save(self, out_dir: Path, frames: Optional[dict] = None) -> Path:
        """
        Write record.json and each frame as <name>.csv into the run directory.

        Returns:
            The run directory
        """
        directory = self.run_dir(out_dir)
        try:
            directory.mkdir(parents=True, exist_ok=True)
            for name, frame in (frames or {}).items():
                path = directory / f"{name}.csv"
                frame.to_csv(path, index=False)
                self.files.append(path.name)
            (directory / "record.json").write_text(self.to_json() + "\n", encoding="utf-8")
        except OSError as e:
            logger.error(f"Failed to persist run record: {e}")
            raise ConfigurationError(f"Failed to write run directory {directory}: {e}") from e
        logger.info(f"Run record written to {directory}")
        return directory


def load_record(path: Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "record.json"
    return json.loads(path.read_text(encoding="utf-8"))


def results_frame(record: RunRecord) -> pd.DataFrame:
    """Flat table of the per-probe results of a record."""
    return pd.json_normalize(record.results)
