"""Crouzeix-Raviart functions: interpolation, evaluation, mass and error norms.

On a cell the basis function of local edge ``k`` is ``1 - 2*lambda_k`` where
``lambda_k`` is the barycentric coordinate of the opposite vertex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidField, PointOutsideCell
from .mesh import TriMesh

__all__ = [
    "CRFunction",
    "ErrorReport",
    "mass_vector",
    "cr_interpolate",
    "evaluate",
    "evaluate_many",
    "vertex_values",
    "total_mass",
    "error_norms",
    "TRI6_POINTS",
    "TRI6_WEIGHTS",
]

# degree-4 six-point rule, barycentric points, weights sum to one
_A1, _W1 = 0.44594849091596488632, 0.22338158967801146570
_A2, _W2 = 0.09157621350977074346, 0.10995174365532186764
TRI6_POINTS = np.array([
    [1 - 2 * _A1, _A1, _A1], [_A1, 1 - 2 * _A1, _A1], [_A1, _A1, 1 - 2 * _A1],
    [1 - 2 * _A2, _A2, _A2], [_A2, 1 - 2 * _A2, _A2], [_A2, _A2, 1 - 2 * _A2],
])
TRI6_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)


@dataclass
class CRFunction:
    """One value per edge midpoint of ``mesh``."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_edges,):
            raise ValueError(
                f"expected {self.mesh.n_edges} DOF values, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise InvalidField("CR DOF values must be finite")


@dataclass(frozen=True)
class ErrorReport:
    l2: float
    linf: float
    dof_count: int
    h: float


def mass_vector(mesh: TriMesh) -> np.ndarray:
    """Diagonal of the CR mass matrix, ``m_i = |S_i| / 3``."""
    m = np.zeros(mesh.n_edges)
    np.add.at(m, mesh.cell_edges.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return m


def _sample(f, points, *args):
    vals = np.asarray(f(points[..., 0], points[..., 1], *args), dtype=float)
    vals = np.broadcast_to(vals, points.shape[:-1])
    if not np.isfinite(vals).all():
        raise InvalidField("field produced non-finite values")
    return vals


def cr_interpolate(f, mesh: TriMesh) -> CRFunction:
    """Nodal CR interpolant: ``U_i = f(x_i)`` at each edge midpoint."""
    return CRFunction(mesh, np.array(_sample(f, mesh.midpoints)))


def evaluate(u: CRFunction, cell, point) -> float:
    lam = u.mesh.barycentric(cell, np.asarray(point, dtype=float))
    if lam.min() < -1e-12:
        raise PointOutsideCell(f"point {point} is outside cell {cell}")
    dofs = u.values[u.mesh.cell_edges[cell]]
    return float(np.dot(dofs, 1.0 - 2.0 * lam))


def evaluate_many(u: CRFunction, cells, lam):
    """Evaluate on ``cells`` (C,) at barycentric points ``lam`` (Q, 3) -> (C, Q)."""
    dofs = u.values[u.mesh.cell_edges[cells]]
    return dofs @ (1.0 - 2.0 * np.asarray(lam)).T


def vertex_values(u: CRFunction) -> np.ndarray:
    """Cellwise values at the three cell vertices, shape (C, 3).

    At vertex k the opposite-edge basis is -1 and the other two are +1.
    """
    dofs = u.values[u.mesh.cell_edges]
    return dofs.sum(axis=1)[:, None] - 2.0 * dofs


def total_mass(u: CRFunction, m: np.ndarray) -> float:
    return math.fsum(m * u.values)


def error_norms(u_h, exact, t=0.0) -> ErrorReport:
    """L2 and nodal max errors of a CR or half-mesh P1 field against ``exact(x, y, t)``.

    The L2 norm uses the degree-4 six-point rule on every cell; the max norm
    is taken over DOFs (CR) or vertices (P1).
    """
    if isinstance(u_h, CRFunction):
        mesh = u_h.mesh
        approx = evaluate_many(u_h, np.arange(mesh.n_cells), TRI6_POINTS)
        nodes = mesh.midpoints
        nodal = u_h.values
    else:
        mesh = u_h.mesh
        approx = u_h.values[mesh.cells] @ TRI6_POINTS.T
        nodes = mesh.vertices
        nodal = u_h.values
    p = mesh.vertices[mesh.cells]
    xq = np.einsum("qk,ckd->cqd", TRI6_POINTS, p)
    err = _sample(exact, xq, t) - approx
    contrib = (err ** 2) @ TRI6_WEIGHTS * mesh.areas
    l2 = math.sqrt(math.fsum(contrib))
    linf = float(np.max(np.abs(_sample(exact, nodes, t) - nodal)))
    h = getattr(u_h, "parent_h", None) or mesh.h
    return ErrorReport(l2=l2, linf=linf, dof_count=len(nodal), h=h)
