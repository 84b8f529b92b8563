"""Deterministic table and report output.

Byte determinism is a contract here: floats are rendered by repr (shortest
round-trip form), line endings are LF, JSON keys are sorted, and nothing
time- or host-dependent is ever written.  Rerunning a command with the same
config and seed must reproduce every output byte.
"""

import json

import numpy as np

from .errors import ValidationError

__all__ = ["format_cell", "write_table", "write_json", "to_jsonable"]


def format_cell(x):
    """One CSV cell. Floats use repr for exact round-trip; no quoting layer,
    so strings must stay free of separators."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    s = str(x)
    if any(c in s for c in (",", "\n", "\r", '"')):
        raise ValidationError(f"CSV cell needs quoting, refusing: {s!r}")
    return s


def write_table(path, header, rows, fmt="csv"):
    """Write a long-format table as CSV or as a JSON array of row objects."""
    header = list(header)
    rows = [tuple(r) for r in rows]
    for r in rows:
        if len(r) != len(header):
            raise ValidationError(
                f"row width {len(r)} does not match header width {len(header)}")
    if fmt == "csv":
        with open(path, "w", newline="\n") as f:
            f.write(",".join(format_cell(h) for h in header) + "\n")
            for r in rows:
                f.write(",".join(format_cell(x) for x in r) + "\n")
    elif fmt == "json":
        write_json(path, [dict(zip(header, r)) for r in rows])
    else:
        raise ValidationError(f"format must be 'csv' or 'json', got {fmt!r}")
    return path


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if obj is None or isinstance(obj, str):
        return obj
    raise ValidationError(f"cannot serialize {type(obj).__name__} to JSON")


def write_json(path, obj):
    with open(path, "w", newline="\n") as f:
        json.dump(to_jsonable(obj), f, sort_keys=True, indent=2)
        f.write("\n")
    return path
