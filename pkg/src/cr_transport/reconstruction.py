"""Continuous P1 reconstruction of a CR field on the h/2 mesh.

Half-mesh vertices take values by three rules:

1. midpoints of parent edges copy the CR DOF;
2. interior parent vertices interpolate their ring of edge midpoints with
   Wachspress coordinates;
3. boundary parent vertices use boundary data when available, otherwise
   the mean of the adjacent cells' CR traces at that vertex.

With boundary data all three rules form convex combinations of DOFs or
data, so bounds on those carry over to the whole reconstructed field. The
fallback of rule 3 averages CR vertex traces, which may overshoot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cr_space import CRFunction, vertex_values
from .errors import NonConvexRing, PointOnBoundaryOrOutside
from .mesh import BOUNDARY_VERTEX, HalfMesh, RingPolygon, TriMesh

__all__ = [
    "P1HalfMeshFunction",
    "WachspressWeights",
    "GlobalBound",
    "signed_area",
    "wachspress",
    "wachspress_batch",
    "reconstruct",
    "global_bound_check",
]


def signed_area(a, b, c):
    """Signed area of the triangle ``(a, b, c)``, positive when counter-clockwise.

    Written relative to ``a`` which keeps the cancellation small for nearly
    degenerate triangles.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    return 0.5 * ((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                  - (c[..., 0] - a[..., 0]) * (b[..., 1] - a[..., 1]))


@dataclass(frozen=True)
class WachspressWeights:
    w: np.ndarray

    def __len__(self):
        return len(self.w)

    def interpolate(self, values):
        return float(np.dot(self.w, values))


@dataclass
class P1HalfMeshFunction:
    """Continuous piecewise-linear field given by its h/2-mesh vertex values."""

    half: HalfMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.half.mesh.n_vertices,):
            raise ValueError("one value per half-mesh vertex expected")
        if not np.isfinite(self.values).all():
            raise ValueError("reconstructed values must be finite")

    @property
    def mesh(self) -> TriMesh:
        return self.half.mesh

    @property
    def parent_h(self):
        return self.half.parent.h


def wachspress_batch(points, x):
    """Wachspress coordinates for a batch of polygons with equal size.

    ``points`` has shape (R, s, 2) with ccw vertices, ``x`` shape (R, 2).
    Returns the weights (R, s) and the smallest ``A(x, y_i, y_{i+1})``
    relative to the squared polygon size, used to reject boundary points.
    """
    points = np.asarray(points, dtype=float)
    x = np.asarray(x, dtype=float)[:, None, :]
    prev = np.roll(points, 1, axis=1)
    nxt = np.roll(points, -1, axis=1)
    corner = signed_area(prev, points, nxt)
    # A(x, y_i, y_{i+1}) for every i; the i-1 factor is the same array rolled
    fan = signed_area(x, points, nxt)
    fan_prev = np.roll(fan, 1, axis=1)
    size = np.ptp(points, axis=1).max(axis=1)
    rel = fan.min(axis=1) / np.maximum(size, np.finfo(float).tiny) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        wt = corner / (fan_prev * fan)
        w = wt / wt.sum(axis=1, keepdims=True)
    return w, rel


def wachspress(ring: RingPolygon | np.ndarray, x) -> WachspressWeights:
    """Wachspress coordinates of ``x`` with respect to a convex ccw polygon."""
    pts = ring.vertices if isinstance(ring, RingPolygon) else np.asarray(ring, dtype=float)
    w, rel = wachspress_batch(pts[None], np.asarray(x, dtype=float)[None])
    if not rel[0] > 1e-14:
        raise PointOnBoundaryOrOutside(f"point {tuple(np.ravel(x))} is not strictly inside the polygon")
    return WachspressWeights(w[0])


def _ring_convex(points):
    d = np.roll(points, -1, axis=1) - points
    nxt = np.roll(d, -1, axis=1)
    cross = d[..., 0] * nxt[..., 1] - d[..., 1] * nxt[..., 0]
    scale = np.einsum("rsd,rsd->rs", d, d)
    return np.all(cross > -1e-12 * scale, axis=1)


def reconstruct(u_h: CRFunction, half: HalfMesh, boundary_data=None, t=0.0) -> P1HalfMeshFunction:
    """Continuous P1 field on ``half`` built from the CR field ``u_h``.

    ``boundary_data(x, y, t)`` (optional) supplies values at boundary parent
    vertices.
    """
    parent = half.parent
    if u_h.mesh is not parent:
        raise ValueError("u_h must live on the parent mesh of half")
    nv = parent.n_vertices
    coords = half.mesh.vertices
    vals = np.empty(half.mesh.n_vertices)
    vals[nv:] = u_h.values

    for s in np.unique(half.ring_sizes):
        rows = np.flatnonzero(half.ring_sizes == s)
        idx = half.rings[rows, :s]
        centers = half.ring_centers[rows]
        pts = coords[idx]
        convex = _ring_convex(pts)
        if not convex.all():
            bad = int(centers[np.argmin(convex)])
            raise NonConvexRing(f"ring around vertex {bad} is not convex")
        w, rel = wachspress_batch(pts, coords[centers])
        if np.any(rel <= 1e-14):
            bad = int(centers[np.argmin(rel)])
            raise NonConvexRing(f"vertex {bad} is not strictly inside its ring")
        vals[centers] = np.einsum("rs,rs->r", w, vals[idx])

    bnd = np.flatnonzero(half.kind[:nv] == BOUNDARY_VERTEX)
    if boundary_data is not None:
        g = np.asarray(boundary_data(coords[bnd, 0], coords[bnd, 1], t), dtype=float)
        vals[bnd] = np.broadcast_to(g, bnd.shape)
    else:
        vv = vertex_values(u_h)
        total = np.bincount(parent.cells.ravel(), vv.ravel(), minlength=nv)
        count = np.bincount(parent.cells.ravel(), minlength=nv)
        vals[bnd] = total[bnd] / count[bnd]
    return P1HalfMeshFunction(half, vals)


@dataclass(frozen=True)
class GlobalBound:
    vmin: float
    vmax: float
    lower: float
    upper: float

    @property
    def ok(self):
        return self.lower <= self.vmin and self.vmax <= self.upper


def global_bound_check(u_h: CRFunction) -> GlobalBound:
    """Extrema of the CR field over all cell vertices, with the admissible range.

    A CR field with DOFs in ``[a, b]`` is bounded by ``[2a - b, 2b - a]``.
    """
    vv = vertex_values(u_h)
    a, b = float(u_h.values.min()), float(u_h.values.max())
    return GlobalBound(float(vv.min()), float(vv.max()), 2 * a - b, 2 * b - a)
