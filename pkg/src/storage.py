"""
Storage module for persisting results, tables and run manifests.
"""
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from .errors import ConfigError

FORMATS = ("json", "csv")


def to_jsonable(value):
    """Convert numpy scalars and arrays (possibly nested) into plain JSON types."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


class ResultStorage:
    """Writes command results to disk, plus a manifest for replay."""

    def __init__(self, output_file: Path, logger: logging.Logger, fmt: str = "json"):
        """
        Initialize result storage.

        Args:
            output_file: Path of the result file
            logger: Logger instance
            fmt: Output format for tables, "json" or "csv"
        """
        if fmt not in FORMATS:
            raise ConfigError(f"Output format must be one of {FORMATS}, got '{fmt}'")
        self.output_file = Path(output_file)
        self.logger = logger
        self.fmt = fmt

    @property
    def manifest_file(self) -> Path:
        return self.output_file.with_name(self.output_file.name + ".manifest.json")

    def _save(self, path: Path, text: str) -> None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            self.logger.info(f"Saved {path}")
        except Exception as e:
            self.logger.error(f"Error saving {path}: {e}")
            raise

    def save_result(self, result: dict) -> Path:
        """
        Write a result dictionary as JSON.

        Keys are sorted and no timestamps are added, so identical runs
        produce identical files.

        Returns:
            Path of the written file
        """
        text = json.dumps(to_jsonable(result), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        self._save(self.output_file, text)
        return self.output_file

    def save_table(self, table: pd.DataFrame) -> Path:
        """Write a table as CSV or as a JSON list of records, depending on the format."""
        if self.fmt == "csv":
            text = table.to_csv(index=False, float_format="%.12g", lineterminator="\n")
        else:
            records = to_jsonable(table.to_dict(orient="records"))
            text = json.dumps(records, indent=2, ensure_ascii=False) + "\n"
        self._save(self.output_file, text)
        self.logger.info(f"Wrote {len(table)} rows")
        return self.output_file

    def write_manifest(self, config: dict, seeds: List[int], command: Optional[str] = None) -> Path:
        """
        Write <output>.manifest.json with the resolved config and all derived seeds.

        Args:
            config: Fully resolved experiment configuration
            seeds: Seeds used by the run
            command: Subcommand name

        Returns:
            Path of the manifest
        """
        manifest = {
            "command": command,
            "config": to_jsonable(config),
            "seeds": [int(s) for s in seeds],
            "output": str(self.output_file),
            "format": self.fmt,
            "created_at": datetime.now().isoformat(),
        }
        self._save(self.manifest_file, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return self.manifest_file
