"""CSV / JSON writers shared by every module (17 significant digits)."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def fmt(x: float) -> str:
    return "%.17g" % x


def write_path_csv(path, times, values, columns, time_col: str = "t") -> None:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    lines = [",".join([time_col, *columns])]
    for t, row in zip(times, values):
        lines.append(",".join([fmt(t), *(fmt(v) for v in row)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_path_csv(path):
    rows = Path(path).read_text().strip().splitlines()
    header = rows[0].split(",")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    return header, data[:, 0], data[:, 1:]


def to_jsonable(obj):
    """Recursively convert numpy types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
