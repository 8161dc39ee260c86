"""Trace CSV files with full-precision, locale-independent numbers."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from ..monitor import CSV_COLUMNS, Trace


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in trace.records:
        w.writerow([format_value(x) for x in r.row()])
    return buf.getvalue()


def write_trace(trace: Trace, path) -> None:
    Path(path).write_text(trace_to_csv(trace))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and a float array of rows (shape ``(nrows, ncols)``)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], np.zeros((0, 0))
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    return header, data.reshape(-1, len(header))


def write_fields(path, grid, u, v) -> None:
    """Grid dump of an eigenpair: ``i[,j],x[,y],u,v`` per node."""
    xs = grid.coords()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if grid.dim == 1:
        w.writerow(["i", "x", "u", "v"])
        for i in range(grid.n):
            w.writerow([i, format_value(xs[0][i]), format_value(u[i]), format_value(v[i])])
    else:
        w.writerow(["i", "j", "x", "y", "u", "v"])
        for i in range(grid.n):
            for j in range(grid.n):
                w.writerow([i, j, format_value(xs[0][i, j]), format_value(xs[1][i, j]),
                            format_value(u[i, j]), format_value(v[i, j])])
    Path(path).write_text(buf.getvalue())
