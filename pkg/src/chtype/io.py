"""Deterministic CSV and JSON writers and a reader for trajectory tables."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

DIGITS = 17


def fmt(x) -> str:
    return format(float(x), f".{DIGITS}g")


def write_csv(path: Path, header, rows) -> Path:
    """Write ``rows`` (2-D array-like) with a header; LF line endings, 17 significant digits."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(header):
        raise ValueError("row width does not match header")
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    return path


def read_csv(path: Path):
    with open(path, "r", newline="") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj) -> Path:
    path.write_bytes(dumps(obj).encode("utf-8"))
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def trajectory_header(N: int):
    return (["t"] + [f"q_{i}" for i in range(1, N + 1)]
            + [f"p_{i}" for i in range(1, N + 1)] + ["H", "P"])
