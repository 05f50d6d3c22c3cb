#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Artifact writing for experiment runs.
Every file is written to a temporary file in its destination directory and
moved into place with os.replace, so a reader never sees a partial artifact.
"""

import json
import logging
import math
import os
import tempfile
from datetime import date, datetime
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app import __version__

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


class NumericJSONEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, (datetime, date)):
            return obj.isoformat()
        if isinstance(obj, Fraction):
            return f"{obj.numerator}/{obj.denominator}"
        if isinstance(obj, BaseModel):
            return sanitize(obj.model_dump())
        if isinstance(obj, np.ndarray):
            return sanitize(obj.tolist())
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return sanitize(float(obj))
        if isinstance(obj, Path):
            return str(obj)
        return super().default(obj)


def sanitize(obj: Any) -> Any:
    """Replace non-finite floats by "inf", "-inf" or "nan" strings, recursively."""
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, dict):
        return {key: sanitize(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(value) for value in obj]
    if isinstance(obj, BaseModel):
        return sanitize(obj.model_dump())
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    return obj


def to_json(obj: Any) -> str:
    return json.dumps(sanitize(obj), cls=NumericJSONEncoder, indent=2, sort_keys=True, allow_nan=False)


def _atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.info(f"Wrote {path}")
    return path


def write_json(path: Path, obj: Any) -> Path:
    return _atomic_write(path, to_json(obj) + "\n")


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    """Header row, minimal quoting, floats with 17 significant digits."""
    return _atomic_write(path, frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"))


def write_manifest(out_dir: Path, command: str, seed: int, config: Dict, wall_time: float,
                   artifacts: Optional[list] = None, status: str = "ok") -> Path:
    """
    Write manifest.json echoing the resolved config.

    Args:
        out_dir: output directory of the run
        command: command that produced the artifacts
        seed: master seed
        config: fully resolved config
        wall_time: seconds spent in the command
        artifacts: file names written by the command
        status: "ok" or "abstained"

    Returns:
        Path to the manifest
    """
    manifest = {
        "version": __version__,
        "command": command,
        "status": status,
        "seed": seed,
        "wall_time_seconds": wall_time,
        "timestamp": datetime.now().isoformat(timespec="seconds"),
        "config": config,
        "artifacts": sorted(artifacts or []),
    }
    return write_json(Path(out_dir) / "manifest.json", manifest)


def write_error(out_dir: Path, error: BaseException, status: str, field: Optional[str] = None) -> Path:
    """Machine-readable error.json: {status, error_type, message, field?}."""
    payload = {"status": status, "error_type": type(error).__name__, "message": str(error)}
    if field:
        payload["field"] = field
    return write_json(Path(out_dir) / "error.json", payload)
