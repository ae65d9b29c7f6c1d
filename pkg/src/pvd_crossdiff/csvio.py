"""CSV reading and writing with a fixed number of significant digits."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import SchemaError


def format_value(x, precision=17) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{precision}g}"


def write_csv(path, header, rows, precision=17):
    """Write a header row and numeric (or string) rows; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else format_value(v, precision) for v in row])
    return path


def read_csv(path, required=()):
    """Return ``(header, data)`` with ``data`` a float array of shape ``(rows, columns)``."""
    path = Path(path)
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from None
    if not rows or not rows[0]:
        raise SchemaError(f"{path} is empty; a header row is required")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path} lacks columns {', '.join(missing)}")
    body = rows[1:]
    if not body:
        raise SchemaError(f"{path} has a header but no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric entry ({exc})") from None
    if data.shape[1] != len(header):
        raise SchemaError(f"{path}: rows do not match the header width")
    return header, data


def columns(header, data, prefix):
    """Columns named ``prefix0, prefix1, ...`` in index order."""
    idx = []
    i = 0
    while f"{prefix}{i}" in header:
        idx.append(header.index(f"{prefix}{i}"))
        i += 1
    return data[:, idx]
