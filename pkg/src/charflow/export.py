"""File writers: CSV point data, OBJ meshes and JSON reports.

Floats are written with ``%.17g`` so files round-trip exactly; key and row
orders are fixed so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def _fmt(v):
    return FLOAT_FMT % v


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_trajectory_csv(path, trajectory, transported=None):
    header = ["t", "x", "y", "z", "phi"]
    cols = [trajectory.times[:, None], trajectory.states]
    xi = transported if transported is not None else trajectory.transported
    if xi is not None:
        header += ["xi1", "xi2", "xi3", "xi4"]
        cols.append(np.asarray(xi))
    return write_csv(path, header, np.hstack(cols))


def write_mesh_csv(path, mesh):
    T, S = np.meshgrid(mesh.t_grid, mesh.s_grid, indexing="ij")
    data = np.column_stack([T.ravel(), S.ravel(), mesh.nodes.reshape(-1, 4), mesh.xi_t[..., 2].ravel()])
    return write_csv(path, ["t", "s", "x", "y", "z", "phi", "xi3_t"], data)


def write_mesh_obj(path, mesh):
    """Projected surface as a triangle mesh; vertex index ``i * ns + j + 1``."""
    nt, ns = mesh.shape
    pts = mesh.projected.reshape(-1, 3)
    lines = [f"# {mesh.curve.name}: {nt} x {ns} nodes (t rows, s columns)"]
    lines += ["v " + " ".join(_fmt(c) for c in p) for p in pts]
    for i in range(nt - 1):
        for j in range(ns - 1):
            a, b, c, d = i * ns + j + 1, i * ns + j + 2, (i + 1) * ns + j + 1, (i + 1) * ns + j + 2
            lines.append(f"f {a} {b} {d}")
            lines.append(f"f {a} {d} {c}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_polylines_csv(path, curves):
    rows = []
    for k, c in enumerate(curves):
        for p in c.samples:
            rows.append([k, p.t, p.s, *p.q])
    return write_csv(path, ["curve", "t", "s", "x", "y", "z"], rows)


def write_locus_csv(path, locus, n_line=201):
    rows = []
    for k, loc in enumerate(locus.loci):
        for p in loc.sample(n_line):
            rows.append([k, *p])
    return write_csv(path, ["locus", "x", "y", "z"], rows)


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
