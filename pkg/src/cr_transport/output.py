"""CSV tables and legacy VTK snapshots."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .benchmarks import ConvergenceRow
from .cr_space import CRFunction, vertex_values

__all__ = ["write_csv", "read_csv", "write_vtk", "CSV_HEADER"]

CSV_HEADER = ("h", "l2", "rate", "linf", "linf_rate")


def _fmt(x):
    return "" if x is None else f"{x:.5e}"


def write_csv(rows, path, comments=()):
    """Write convergence rows; ``comments`` become leading ``#`` lines."""
    path = Path(path)
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(CSV_HEADER))
    for r in rows:
        lines.append(",".join(_fmt(v) for v in (r.h, r.l2, r.rate, r.linf, r.linf_rate)))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path):
    """Read rows written by :func:`write_csv` (comment lines are skipped)."""
    with open(path, newline="") as fh:
        body = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for rec in csv.DictReader(body):
        val = {k: (float(v) if v not in ("", None) else None) for k, v in rec.items()}
        out.append(ConvergenceRow(val["h"], val["l2"], val["rate"], val["linf"], val["linf_rate"]))
    return out


def write_vtk(field, path, name="u", title="cr_transport field"):
    """Legacy ASCII unstructured grid of triangles with one point scalar.

    CR fields are written cell by cell (three private points per cell) so the
    discontinuities stay visible; continuous fields share their points.
    """
    path = Path(path)
    if isinstance(field, CRFunction):
        mesh = field.mesh
        pts = mesh.vertices[mesh.cells].reshape(-1, 2)
        conn = np.arange(len(pts)).reshape(-1, 3)
        vals = vertex_values(field).ravel()
    else:
        mesh = field.mesh
        pts = mesh.vertices
        conn = mesh.cells
        vals = field.values
    nc = len(conn)
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(pts)} double",
    ]
    out += [f"{x!r} {y!r} 0.0" for x, y in pts.tolist()]
    out.append(f"CELLS {nc} {4 * nc}")
    out += [f"3 {a} {b} {c}" for a, b, c in conn.tolist()]
    out.append(f"CELL_TYPES {nc}")
    out += ["5"] * nc
    out += [f"POINT_DATA {len(pts)}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    out += [repr(v) for v in vals.tolist()]
    try:
        path.write_text("\n".join(out) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
