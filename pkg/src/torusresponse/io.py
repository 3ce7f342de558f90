"""Deterministic CSV and metadata output."""

from __future__ import annotations

import csv
import json
import os

import numpy as np

__all__ = ["emit_csv", "format_value", "read_csv", "write_json"]


def format_value(v) -> str:
    """Integers verbatim, floats at 17 significant digits (round-trips exactly)."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(header, rows, path) -> None:
    """Write ``header`` then ``rows``; identical inputs give identical bytes."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([str(h) for h in header])
            for row in rows:
                writer.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {os.fspath(path)!r}: {exc}") from exc


def read_csv(path):
    """Return ``(header, rows)`` with every cell as a string."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_json(obj, path) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)!r}: {exc}") from exc


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not JSON serialisable: {type(v).__name__}")
