"""
Configuration management for the vecspin project.
Runtime defaults live here; VECSPIN_* environment variables (or a .env file at
the project root) override them. Experiment files are JSON and reference
model / spin-measure / path files relative to their own location.
"""
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

from dotenv import load_dotenv

from src.errors import ConfigError

# Project paths
BASE_DIR = Path(__file__).resolve().parent
load_dotenv(BASE_DIR / ".env")

DATA_DIR = Path(os.getenv("VECSPIN_DATA_DIR", BASE_DIR / "data"))
LOGS_DIR = Path(os.getenv("VECSPIN_LOGS_DIR", BASE_DIR / "logs"))
CONFIG_DIR = BASE_DIR / "config"

# Ensure directories exist
DATA_DIR.mkdir(parents=True, exist_ok=True)
LOGS_DIR.mkdir(parents=True, exist_ok=True)

# Runtime defaults
DEFAULT_SEED = int(os.getenv("VECSPIN_SEED", 0))
DEFAULT_JOBS = int(os.getenv("VECSPIN_JOBS", 1))
LOG_LEVEL = os.getenv("VECSPIN_LOG_LEVEL", "INFO")
GH_NODES = int(os.getenv("VECSPIN_GH_NODES", 20))
MC_SAMPLES = int(os.getenv("VECSPIN_MC_SAMPLES", 100_000))

OUTPUT_FORMATS = ("json", "csv")
OBJECTIVES = (
    "parisi",
    "parisi-constrained",
    "pan",
    "hj",
    "xistar",
    "hopf",
    "equivalence",
    "grad",
    "levels",
    "potts-corollary",
)
OBSERVABLES = ("free-energy", "self-overlap", "concentration", "gradient", "covariance", "potts-structure")
SECTIONS = ("validate", "eval", "solve", "simulate")
KNOWN_KEYS = {
    "model", "spin_measure", "path", "x", "seed", "jobs", "output", "format",
    "quadrature", "optimizer", "simulation", *SECTIONS,
}

Reference = Union[str, dict]


def load_json_config(path: Path) -> dict:
    """Read a JSON object from ``path``; syntax errors carry line and column."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Missing config file: {path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            cfg = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path} at line {e.lineno}, column {e.colno}: {e.msg}")

    if not isinstance(cfg, dict):
        raise ConfigError(f"Config must be a JSON object in {path}")

    return cfg


def _is_matrix(value) -> bool:
    return (
        isinstance(value, list)
        and len(value) > 0
        and all(isinstance(row, list) and all(isinstance(v, (int, float)) for v in row) for row in value)
        and all(len(row) == len(value) for row in value)
    )


def validate_config(raw: dict) -> bool:
    """
    Check the top-level structure of an experiment config.

    All problems are collected and raised together.
    """
    errors = []

    if "model" not in raw:
        errors.append("'model' is missing (file reference or inline object)")
    elif not isinstance(raw["model"], (str, dict)):
        errors.append("'model' must be a file reference or an object")
    if "spin_measure" in raw and not isinstance(raw["spin_measure"], (str, dict)):
        errors.append("'spin_measure' must be a file reference or an object")
    if "path" in raw and not isinstance(raw["path"], (str, dict)):
        errors.append("'path' must be a file reference or an object")
    if "x" in raw and not (_is_matrix(raw["x"]) or isinstance(raw["x"], (int, float))):
        errors.append("'x' must be a square matrix (list of equal-length rows)")
    if "seed" in raw and not isinstance(raw["seed"], int):
        errors.append("'seed' must be an integer")
    if "jobs" in raw and (not isinstance(raw["jobs"], int) or raw["jobs"] < 1):
        errors.append("'jobs' must be a positive integer")
    if "format" in raw and raw["format"] not in OUTPUT_FORMATS:
        errors.append(f"'format' must be one of {OUTPUT_FORMATS}")
    for block in ("quadrature", "optimizer", "simulation", *SECTIONS):
        if block in raw and not isinstance(raw[block], dict):
            errors.append(f"'{block}' must be an object")
    solve = raw.get("solve")
    if isinstance(solve, dict) and "objective" in solve and solve["objective"] not in OBJECTIVES:
        errors.append(f"'solve.objective' must be one of {OBJECTIVES}")
    simulate = raw.get("simulate")
    if isinstance(simulate, dict):
        for obs in simulate.get("observables", []):
            if obs not in OBSERVABLES:
                errors.append(f"'simulate.observables' entry '{obs}' must be one of {OBSERVABLES}")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        errors.append(f"unknown top-level fields: {unknown}")

    if errors:
        raise ConfigError(
            "Configuration errors:\n" +
            "\n".join(f"  - {e}" for e in errors)
        )

    return True


@dataclass
class ExperimentConfig:
    """An experiment file with every reference resolved to its JSON content."""

    source: Optional[Path]
    model: dict
    spin_measure: Optional[dict] = None
    path: Optional[dict] = None
    x: Optional[list] = None
    seed: int = DEFAULT_SEED
    jobs: int = DEFAULT_JOBS
    output: Optional[Path] = None
    format: str = "json"
    quadrature: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def seeds(self) -> List[int]:
        """Every seed a run derives from the global seed, in a fixed order."""
        values = [self.seed]
        for block in (self.quadrature, self.optimizer, self.simulation):
            if "seed" in block:
                values.append(int(block["seed"]))
        return values

    def to_dict(self) -> dict:
        out = {
            "model": self.model,
            "spin_measure": self.spin_measure,
            "path": self.path,
            "x": self.x,
            "seed": self.seed,
            "jobs": self.jobs,
            "output": str(self.output) if self.output is not None else None,
            "format": self.format,
            "quadrature": self.quadrature,
            "optimizer": self.optimizer,
            "simulation": self.simulation,
        }
        out.update(self.sections)
        return out


def _resolve(ref: Optional[Reference], base: Path, name: str) -> Optional[dict]:
    if ref is None or isinstance(ref, dict):
        return ref
    path = (base / ref).resolve()
    try:
        return load_json_config(path)
    except ConfigError as e:
        raise ConfigError(f"'{name}' reference {ref}: {e}")


def experiment_from_dict(raw: dict, base: Path = BASE_DIR, source: Optional[Path] = None) -> ExperimentConfig:
    raw = {k: v for k, v in raw.items() if v is not None}
    validate_config(raw)
    output = raw.get("output")
    fmt = raw.get("format")
    if fmt is None and isinstance(output, str):
        fmt = "csv" if output.endswith(".csv") else "json"
    return ExperimentConfig(
        source=source,
        model=_resolve(raw["model"], base, "model"),
        spin_measure=_resolve(raw.get("spin_measure"), base, "spin_measure"),
        path=_resolve(raw.get("path"), base, "path"),
        x=raw.get("x"),
        seed=int(raw.get("seed", DEFAULT_SEED)),
        jobs=int(raw.get("jobs", DEFAULT_JOBS)),
        output=(base / output).resolve() if isinstance(output, str) else None,
        format=fmt or "json",
        quadrature=dict(raw.get("quadrature", {})),
        optimizer=dict(raw.get("optimizer", {})),
        simulation=dict(raw.get("simulation", {})),
        sections={name: dict(raw[name]) for name in SECTIONS if name in raw},
    )


def load_experiment(path: Path) -> ExperimentConfig:
    """
    Load an experiment file and resolve its references.

    A run manifest is accepted as well; its resolved config is replayed.

    Args:
        path: Path to the experiment JSON or manifest

    Returns:
        ExperimentConfig with model, spin measure and path loaded
    """
    path = Path(path).resolve()
    raw = load_json_config(path)
    if "config" in raw and "seeds" in raw:
        raw = raw["config"]
        if not isinstance(raw, dict):
            raise ConfigError(f"Manifest {path} has no config object")
    return experiment_from_dict(raw, base=path.parent, source=path)
