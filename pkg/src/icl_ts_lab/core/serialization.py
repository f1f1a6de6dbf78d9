"""Schema-versioned file codecs: matrices, JSON documents and CSV tables.

Every file the lab writes starts with (CSV) or carries (JSON) ``schema = 1`` so
downstream readers can reject files from an incompatible layout.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from icl_ts_lab.core.errors import ConfigError, DimensionError
from icl_ts_lab.core.numerics import Matrix, as_matrix

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_HEADER = f"# schema={SCHEMA_VERSION}"


# -- matrices ---------------------------------------------------------------


def matrix_to_dict(m: Matrix) -> dict[str, Any]:
    m = as_matrix(m)
    rows, cols = m.shape
    return {"rows": rows, "cols": cols, "data": m.ravel().tolist()}


def matrix_from_dict(obj: dict[str, Any]) -> Matrix:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed matrix object: {exc}") from exc
    if len(data) != rows * cols:
        raise DimensionError(f"matrix data has {len(data)} entries, expected {rows}x{cols}")
    return np.asarray(data, dtype=np.float64).reshape(rows, cols)


def write_matrix_csv(m: Matrix, path: Path) -> Path:
    """One line per matrix row, shortest round-trip repr, '.' decimal."""
    m = as_matrix(m)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(repr(float(v)) for v in row) for row in m]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_matrix_csv(path: Path) -> Matrix:
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    return as_matrix([[float(v) for v in ln.split(",")] for ln in lines])


# -- documents --------------------------------------------------------------


def write_json(obj: dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"schema": SCHEMA_VERSION, **obj}
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def read_json(path: Path) -> dict[str, Any]:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    schema = obj.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema {schema}")
    return obj


def write_table(df: pd.DataFrame, path: Path) -> Path:
    """CSV with the ``# schema=1`` header line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(SCHEMA_HEADER + "\n")
        df.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    logger.debug("Wrote %s (%d rows)", path, len(df))
    return path


def read_table(path: Path) -> pd.DataFrame:
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first.startswith("# schema=") and first != SCHEMA_HEADER:
        raise ConfigError(f"{path}: unsupported {first[2:]}")
    return pd.read_csv(path, skiprows=1 if first.startswith("# schema=") else 0, float_precision="round_trip")
