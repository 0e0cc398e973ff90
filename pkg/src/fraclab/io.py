"""CSV and JSON writers for operators, fields and reports.

CSV files start with ``#``-prefixed ``key=value`` header lines and store
numbers with 17 significant digits. JSON output is canonical (sorted keys,
fixed separators) so identical results serialize to identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.17g"


def _header_lines(header):
    return [f"# {k}={v}" for k, v in (header or {}).items()]


def write_matrix_csv(path, matrix, header=None):
    """Dense row-major dump with a ``key=value`` header (e.g. n, N, s, tag)."""
    path = Path(path)
    A = np.atleast_2d(np.asarray(matrix, float))
    with path.open("w", newline="") as fh:
        for line in _header_lines(header):
            fh.write(line + "\n")
        np.savetxt(fh, A, delimiter=",", fmt=FLOAT_FORMAT)
    return path


def read_matrix_csv(path):
    """Inverse of :func:`write_matrix_csv`; returns ``(matrix, header)``."""
    header = {}
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                header[key] = value
            elif line.strip():
                rows.append([float(v) for v in line.split(",")])
    return np.array(rows), header


def write_columns_csv(path, columns, header=None):
    """Named columns of equal length, e.g. ``{"r": ..., "H": ..., "D": ..., "N": ...}``."""
    path = Path(path)
    names = list(columns)
    data = [np.ravel(np.asarray(columns[k], float)) for k in names]
    lengths = {d.size for d in data}
    if len(lengths) > 1:
        raise ValueError("columns differ in length")
    with path.open("w", newline="") as fh:
        for line in _header_lines(header):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in zip(*data):
            writer.writerow([FLOAT_FORMAT % v for v in row])
    return path


def write_field_csv(path, x, y, U, header=None):
    """Extension field as ``(x, y, U)`` triples, x-major."""
    X, Y = np.meshgrid(np.asarray(x, float), np.asarray(y, float), indexing="ij")
    return write_columns_csv(path, {"x": X, "y": Y, "U": np.asarray(U, float)}, header)


def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
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
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps_canonical(obj):
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.write_text(dumps_canonical(obj))
    return path
