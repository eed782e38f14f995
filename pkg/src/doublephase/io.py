"""Legacy ASCII VTK fields, CSV tables and JSON records."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .mesh import Mesh

__all__ = ["write_vtk", "read_vtk", "write_csv", "read_csv", "write_json", "read_json", "to_jsonable"]


def write_vtk(path, mesh: Mesh, fields: dict[str, np.ndarray], title: str = "doublephase") -> None:
    """Write nodal scalar fields on a triangle mesh (VTK legacy, ASCII)."""
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{x!r} {y!r} 0" for x, y in mesh.vertices.tolist()]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    if fields:
        lines.append(f"POINT_DATA {nv}")
    for name, vals in fields.items():
        vals = np.asarray(vals, dtype=float)
        if vals.shape != (nv,):
            raise ValueError(f"field {name!r} has shape {vals.shape}, expected ({nv},)")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(v) for v in vals.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk(path):
    """Read a file written by :func:`write_vtk`.

    Returns ``(points (n, 2), triangles (t, 3), fields dict)``.
    """
    tokens = Path(path).read_text().split("\n")
    i = 4
    head = tokens[i].split()
    if head[0] != "POINTS":
        raise ValueError(f"{path}: expected POINTS, got {tokens[i]!r}")
    nv = int(head[1])
    pts = np.array([[float(t) for t in tokens[i + 1 + k].split()[:2]] for k in range(nv)])
    i += 1 + nv
    nt = int(tokens[i].split()[1])
    tris = np.array([[int(t) for t in tokens[i + 1 + k].split()[1:4]] for k in range(nt)])
    i += 1 + nt + 1 + nt
    fields = {}
    while i < len(tokens):
        words = tokens[i].split()
        if words and words[0] == "SCALARS":
            name = words[1]
            fields[name] = np.array([float(tokens[i + 2 + k]) for k in range(nv)])
            i += 2 + nv
        else:
            i += 1
    return pts, tris, fields


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
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
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
