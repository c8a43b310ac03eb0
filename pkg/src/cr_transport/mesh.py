"""Triangular meshes with the edge connectivity needed by the CR element.

Edges are the degrees of freedom of the Crouzeix-Raviart space, so the mesh
stores, besides vertices and cells, a global edge table with adjacency,
midpoints and fixed unit normals, and two edge-edge sparsity patterns: the
support graph (edges sharing a cell) and the wider coupling of the upwind
transport operator.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix

from .errors import MeshError, NonConvexRing

__all__ = [
    "TriMesh",
    "HalfMesh",
    "RingPolygon",
    "build_uniform_mesh",
    "refine_half",
    "ring_polygon",
    "read_mesh",
    "write_mesh",
    "MIDPOINT",
    "INTERIOR_VERTEX",
    "BOUNDARY_VERTEX",
]

# half-mesh vertex classes
MIDPOINT = 0
INTERIOR_VERTEX = 1
BOUNDARY_VERTEX = 2

_CONVEX_TOL = 1e-12


def _signed_areas(p0, p1, p2):
    return 0.5 * ((p1[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1])
                  - (p2[..., 0] - p0[..., 0]) * (p1[..., 1] - p0[..., 1]))


class TriMesh:
    """Conforming triangulation with CR edge data.

    Local edge ``k`` of a cell is the edge opposite local vertex ``k``.
    Edge vertex pairs are stored sorted by global index. Each edge has a
    fixed unit normal; for interior edges it points from ``edge_cells[e, 0]``
    into ``edge_cells[e, 1]``, for boundary edges it points outward and
    ``edge_cells[e, 1] == -1``.
    """

    def __init__(self, vertices, cells):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.array(cells, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (V, 2)")
        if cells.ndim != 2 or cells.shape[1] != 3 or len(cells) == 0:
            raise MeshError("cells must have shape (C, 3) with C >= 1")
        if cells.min() < 0 or cells.max() >= len(vertices):
            raise MeshError("cell references a vertex index out of range")
        if not np.isfinite(vertices).all():
            raise MeshError("vertex coordinates must be finite")

        p = vertices[cells]
        area = _signed_areas(p[:, 0], p[:, 1], p[:, 2])
        scale = np.ptp(vertices, axis=0).max() ** 2
        if np.any(np.abs(area) <= 1e-14 * scale):
            raise MeshError("mesh contains degenerate cells")
        cw = area < 0
        if cw.any():
            cells[cw] = cells[cw][:, [0, 2, 1]]
            area = np.abs(area)

        self.vertices = vertices
        self.cells = cells
        self.areas = area
        self._build_edges()
        for name in ("vertices", "cells", "areas", "edges", "cell_edges",
                     "edge_cells", "normals", "midpoints", "lengths", "boundary"):
            getattr(self, name).setflags(write=False)

    def _build_edges(self):
        cells = self.cells
        nv = len(self.vertices)
        a = cells[:, [1, 2, 0]]
        b = cells[:, [2, 0, 1]]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        keys = (lo * nv + hi).ravel()
        uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if counts.max() > 2:
            raise MeshError("an edge is shared by more than two cells")
        self.edges = np.stack([uniq // nv, uniq % nv], axis=1)
        self.cell_edges = inverse.reshape(-1, 3)

        n_edges = len(uniq)
        owner = np.repeat(np.arange(len(cells)), 3)
        order = np.argsort(inverse, kind="stable")
        first = np.searchsorted(inverse[order], np.arange(n_edges))
        edge_cells = np.full((n_edges, 2), -1, dtype=np.int64)
        edge_cells[:, 0] = owner[order[first]]
        two = counts == 2
        edge_cells[two, 1] = owner[order[first[two] + 1]]

        va = self.vertices[self.edges[:, 0]]
        vb = self.vertices[self.edges[:, 1]]
        tangent = vb - va
        lengths = np.hypot(tangent[:, 0], tangent[:, 1])
        normals = np.stack([-tangent[:, 1], tangent[:, 0]], axis=1) / lengths[:, None]
        midpoints = 0.5 * (va + vb)

        centroids = self.vertices[cells].mean(axis=1)
        side = np.einsum("ij,ij->i", centroids[edge_cells[:, 0]] - midpoints, normals)
        # normal must point away from the first cell
        swap = two & (side > 0)
        edge_cells[swap] = edge_cells[swap][:, ::-1]
        flip = ~two & (side > 0)
        normals[flip] *= -1.0

        self.edge_cells = edge_cells
        self.boundary = ~two
        self.normals = normals
        self.lengths = lengths
        self.midpoints = midpoints

    # sizes -----------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    # geometry --------------------------------------------------------------
    @cached_property
    def circumdiameters(self):
        p = self.vertices[self.cells]
        a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        # 2R = abc / (2|K|)
        return a * b * c / (2.0 * self.areas)

    @property
    def h(self):
        """Largest circumscribed-circle diameter over all cells."""
        return float(self.circumdiameters.max())

    @cached_property
    def lambda_gradients(self):
        """Gradients of the barycentric coordinates, shape (C, 3, 2)."""
        p = self.vertices[self.cells]
        p1 = p[:, [1, 2, 0]]
        p2 = p[:, [2, 0, 1]]
        # grad lambda_k = rot(p_{k+2} - p_{k+1}) / (2|K|), pointing into vertex k
        d = p2 - p1
        g = np.stack([-d[..., 1], d[..., 0]], axis=-1)
        return g / (2.0 * self.areas[:, None, None])

    @cached_property
    def cr_gradients(self):
        """Gradients of the CR basis ``1 - 2 lambda_k`` per cell, shape (C, 3, 2)."""
        return -2.0 * self.lambda_gradients

    def barycentric(self, cell, points):
        """Barycentric coordinates of ``points`` (..., 2) in ``cell`` (broadcastable)."""
        p = self.vertices[self.cells[cell]]
        x = np.asarray(points, dtype=float)
        a0 = _signed_areas(x, p[..., 1, :], p[..., 2, :])
        a1 = _signed_areas(p[..., 0, :], x, p[..., 2, :])
        a2 = _signed_areas(p[..., 0, :], p[..., 1, :], x)
        return np.stack([a0, a1, a2], axis=-1) / self.areas[cell][..., None]

    @property
    def domain_area(self):
        return float(np.sum(self.areas))

    # connectivity ----------------------------------------------------------
    @cached_property
    def neighbors(self):
        """CSR sparsity of the support graph: edges sharing a cell, including i itself."""
        n = self.n_edges
        ce = self.cell_edges
        rows = np.repeat(ce, 3, axis=1).ravel()
        cols = np.tile(ce, (1, 3)).ravel()
        return _pattern_from_keys(np.unique(rows * n + cols), n)

    @cached_property
    def coupling(self):
        """CSR sparsity of the transport operator.

        Besides edges sharing a cell, the upwind face term couples every
        edge of the two cells on either side of an interior face.
        """
        n = self.n_edges
        ce = self.cell_edges
        ec = self.edge_cells[~self.boundary]
        patch = np.concatenate([ce[ec[:, 0]], ce[ec[:, 1]]], axis=1)
        keys = [
            (ce[:, :, None] * n + ce[:, None, :]).ravel(),
            (patch[:, :, None] * n + patch[:, None, :]).ravel(),
        ]
        return _pattern_from_keys(np.unique(np.concatenate(keys)), n)

    def neighbor_list(self, i):
        nb = self.neighbors
        return nb.indices[nb.indptr[i]:nb.indptr[i + 1]]

    @cached_property
    def boundary_vertices(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary].ravel()] = True
        return mask

    def __repr__(self):
        return (f"TriMesh(V={self.n_vertices}, C={self.n_cells}, "
                f"N={self.n_edges}, h={self.h:.4g})")


@dataclass(frozen=True)
class RingPolygon:
    """Polygon of half-mesh neighbours around an interior parent vertex."""

    vertices: np.ndarray
    center: np.ndarray
    convex: bool
    indices: np.ndarray | None = None

    @property
    def s(self):
        return len(self.vertices)


class HalfMesh:
    """Uniform 4-way refinement of a parent mesh.

    Child vertex ``v < V`` is parent vertex ``v``; child vertex ``V + e`` is
    the midpoint of parent edge ``e``. Child cells ``4K .. 4K+3`` subdivide
    parent cell ``K``.
    """

    def __init__(self, parent: TriMesh):
        self.parent = parent
        nv = parent.n_vertices
        ne = parent.n_edges
        verts = np.vstack([parent.vertices, parent.midpoints])
        v = parent.cells
        m = parent.cell_edges + nv
        children = np.stack([
            np.stack([v[:, 0], m[:, 2], m[:, 1]], axis=1),
            np.stack([v[:, 1], m[:, 0], m[:, 2]], axis=1),
            np.stack([v[:, 2], m[:, 1], m[:, 0]], axis=1),
            np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
        ], axis=1).reshape(-1, 3)
        self.mesh = TriMesh(verts, children)

        kind = np.full(nv + ne, MIDPOINT, dtype=np.int8)
        kind[:nv] = np.where(parent.boundary_vertices, BOUNDARY_VERTEX, INTERIOR_VERTEX)
        source = np.concatenate([np.arange(nv), np.arange(ne)])
        self.kind = kind
        self.source = source
        self.kind.setflags(write=False)
        self.source.setflags(write=False)
        self._build_rings()

    def _build_rings(self):
        parent = self.parent
        nv = parent.n_vertices
        centers = np.concatenate([parent.edges[:, 0], parent.edges[:, 1]])
        edge_ids = np.concatenate([np.arange(parent.n_edges)] * 2)
        keep = ~parent.boundary_vertices[centers]
        centers = centers[keep]
        edge_ids = edge_ids[keep]
        d = parent.midpoints[edge_ids] - parent.vertices[centers]
        angle = np.arctan2(d[:, 1], d[:, 0])
        order = np.lexsort((angle, centers))
        centers = centers[order]
        edge_ids = edge_ids[order]
        verts, starts, counts = np.unique(centers, return_index=True, return_counts=True)
        self.ring_centers = verts
        self.ring_sizes = counts
        smax = int(counts.max()) if len(counts) else 0
        rings = np.full((len(verts), smax), -1, dtype=np.int64)
        for k in range(smax):
            has = counts > k
            rings[has, k] = edge_ids[starts[has] + k] + nv
        self.rings = rings
        self._ring_row = {int(c): r for r, c in enumerate(verts)}

    @property
    def n_parent_vertices(self):
        return self.parent.n_vertices

    def ring(self, parent_vertex):
        """Child vertex indices of the ring around ``parent_vertex``, ccw."""
        try:
            r = self._ring_row[int(parent_vertex)]
        except KeyError:
            raise ValueError(f"vertex {parent_vertex} is not an interior parent vertex") from None
        return self.rings[r, :self.ring_sizes[r]]

    def classification_counts(self):
        return {
            "midpoint": int(np.sum(self.kind == MIDPOINT)),
            "interior": int(np.sum(self.kind == INTERIOR_VERTEX)),
            "boundary": int(np.sum(self.kind == BOUNDARY_VERTEX)),
        }


def _pattern_from_keys(keys, n):
    r = keys // n
    c = keys % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, r + 1, 1)
    np.cumsum(indptr, out=indptr)
    pattern = csr_matrix((np.ones(len(keys)), c, indptr), shape=(n, n))
    pattern.has_sorted_indices = True
    return pattern


def ring_convexity(points, center):
    """Return (convex, center_inside) for a ccw polygon given as (s, 2) points."""
    d = np.roll(points, -1, axis=0) - points
    dn = d / np.linalg.norm(d, axis=1)[:, None]
    nxt = np.roll(dn, -1, axis=0)
    cross = dn[:, 0] * nxt[:, 1] - dn[:, 1] * nxt[:, 0]
    convex = bool(np.all(cross > -_CONVEX_TOL))
    tri = _signed_areas(center[None, :], points, np.roll(points, -1, axis=0))
    inside = bool(np.all(tri > 0))
    return convex, inside


def build_uniform_mesh(bbox, n):
    """Uniform ``n x n`` square grid on ``bbox = (x0, x1, y0, y1)``, each
    square split along its SW-NE diagonal."""
    n = int(n)
    if n < 1:
        raise MeshError("n must be at least 1")
    x0, x1, y0, y1 = map(float, bbox)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("bounding box has zero area")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return TriMesh(vertices, cells)


def refine_half(mesh: TriMesh) -> HalfMesh:
    return HalfMesh(mesh)


def ring_polygon(half: HalfMesh, parent_vertex) -> RingPolygon:
    """Ring of parent-edge midpoints around an interior parent vertex.

    Raises :class:`NonConvexRing` if the ring has a reflex corner.
    """
    if half.kind[parent_vertex] != INTERIOR_VERTEX:
        raise ValueError(f"vertex {parent_vertex} is not an interior parent vertex")
    idx = half.ring(parent_vertex)
    pts = half.mesh.vertices[idx]
    center = half.mesh.vertices[parent_vertex]
    convex, inside = ring_convexity(pts, center)
    if not convex or not inside:
        raise NonConvexRing(f"ring around vertex {parent_vertex} is not convex")
    return RingPolygon(pts, center.copy(), convex, idx)


def write_mesh(mesh: TriMesh, path):
    """Plain-text mesh: ``V C``, then V lines ``x y``, then C lines ``i j k``."""
    lines = [f"{mesh.n_vertices} {mesh.n_cells}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.cells.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    text = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        nv, nc = int(rows[0][0]), int(rows[0][1])
        verts = np.array([[float(a), float(b)] for a, b in rows[1:1 + nv]])
        cells = np.array([[int(a), int(b), int(c)] for a, b, c in rows[1 + nv:1 + nv + nc]])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if len(verts) != nv or len(cells) != nc:
        raise MeshError(f"malformed mesh file {path}: expected {nv} vertices and {nc} cells")
    return TriMesh(verts, cells)
