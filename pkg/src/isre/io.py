"""Trajectory CSV files and JSON reports."""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .paths import MatPath, TimeGrid


def _fmt(x):
    return format(float(x), ".17g")


def path_header(n):
    return ["t"] + [f"m_{i}_{j}" for i in range(n) for j in range(n)]


def write_path_csv(path, filename):
    n = path.n
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(path_header(n))
        for t, m in zip(path.grid.nodes, path.values):
            w.writerow([_fmt(t)] + [_fmt(v) for v in m.ravel()])


def read_path_csv(filename):
    """Inverse of :func:`write_path_csv`; the grid is rebuilt from the time column."""
    with open(filename, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = math.isqrt(len(header) - 1)
    if header != path_header(n):
        raise ValueError(f"{filename}: unexpected header")
    data = np.array([[float(v) for v in row] for row in body])
    t = data[:, 0]
    grid = TimeGrid(float(t[-1]), len(t) - 1)
    return MatPath(grid, data[:, 1:].reshape(len(t), n, n))


def write_rows_csv(header, rows, filename):
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def clean_json(obj):
    """Make ``obj`` strict-JSON: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_report(report, directory):
    out = Path(directory) / "report.json"
    text = json.dumps(clean_json(report), indent=2, sort_keys=True, allow_nan=False)
    out.write_text(text + "\n")
    return out
