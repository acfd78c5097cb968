"""Serialization of fields, time series and run configurations.

Field snapshots are raw little-endian float64, row-major, with a JSON
sidecar carrying the grid shape and parameters.  All CSV output is UTF-8
with LF line endings and a single header row.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ParameterError

SCHEMA_VERSION = 1


def write_csv(path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return repr(float(v))


def write_field_snapshot(path, values: np.ndarray, sidecar: dict) -> None:
    """Raw little-endian float64 (row-major) plus a .json sidecar."""
    path = Path(path)
    arr = np.ascontiguousarray(values, dtype="<f8")
    path.write_bytes(arr.tobytes())
    meta = dict(sidecar)
    meta["schema_version"] = SCHEMA_VERSION
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )


def read_field_snapshot(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if "n_theta" in meta:
        shape = (meta["n_x1"], meta["n_x2"], meta["n_theta"])
    else:
        shape = (meta["n_x1"], meta["n_x2"])
    return raw.reshape(shape), meta


def write_config(path, config: dict) -> None:
    cfg = dict(config)
    cfg["schema_version"] = SCHEMA_VERSION
    Path(path).write_text(
        json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )


def load_config(path, allowed_keys) -> dict:
    """Strict loader: any key outside allowed_keys (plus schema_version) errors."""
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise ParameterError("config root must be a JSON object")
    extra = set(cfg) - set(allowed_keys) - {"schema_version"}
    if extra:
        raise ParameterError(f"unknown config keys: {sorted(extra)}")
    cfg.pop("schema_version", None)
    return cfg
