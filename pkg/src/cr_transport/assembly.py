"""Assembly of the CR transport operator ``S = A - B`` and the inflow term.

Conventions (``a_ij = a_h(phi_j, phi_i)`` etc., rows are test functions):

* ``A``: volume term ``sum_K int_K (beta . grad phi_j) phi_i``, three-point
  edge-midpoint rule.
* ``B``: interior-face term of the upwind flux, two-point Gauss per edge.
  Boundary edges contribute nothing to ``B``.
* inflow: ``l_i = (C U - d)_i`` from ``int_{dOmega^-} beta.n (u_h - u_in) phi_i``.

The semi-discrete system is ``M dU/dt = -S U + l``.

The velocity is first replaced by a cellwise affine field whose normal trace
on every edge is the L2 projection of ``beta . n_F`` onto linears. Affine
fields are reproduced exactly. For general fields the projected one has a
continuous normal component, and its divergence and boundary flux vanish
whenever those of the continuous field do (up to the error of the 8-point
Gauss rule used for the edge moments).
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.sparse import csr_matrix

from .mesh import TriMesh

__all__ = [
    "VelocityField",
    "DiscreteVelocity",
    "TransportSystem",
    "upwind_flux",
    "project_velocity",
    "assemble_A",
    "assemble_B",
    "assemble_inflow",
    "assemble_system",
    "get_assembler",
]

_G2_T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_G2_W = np.array([0.5, 0.5])
_gmx, _gmw = np.polynomial.legendre.leggauss(8)
_GM_T = 0.5 * (_gmx + 1.0)
_GM_W = 0.5 * _gmw


@dataclass(frozen=True)
class VelocityField:
    """Velocity ``beta(x, y, t) -> (bx, by)`` plus metadata.

    The flags only describe the field (they decide which conservation
    checks apply); they never change the discretisation.
    """

    beta: Callable
    divergence_free: bool = False
    impermeable: bool = False
    time_dependent: bool = True

    def __call__(self, x, y, t=0.0):
        bx, by = self.beta(x, y, t)
        shape = np.broadcast(x, y).shape
        return np.broadcast_to(bx, shape).astype(float), np.broadcast_to(by, shape).astype(float)


def upwind_flux(u_minus, u_plus, beta_dot_n):
    return u_minus * np.maximum(0.0, beta_dot_n) + u_plus * np.minimum(0.0, beta_dot_n)


@dataclass
class DiscreteVelocity:
    """Cellwise affine velocity with affine, single-valued normal traces.

    ``trace_mean`` / ``trace_slope`` give ``beta_h . n_F = mean + slope*(2 tau - 1)``
    on edge ``F`` parametrised from ``edges[F, 0]`` (tau=0) to ``edges[F, 1]``.
    ``vertex_values`` holds the field at the three vertices of every cell.
    """

    trace_mean: np.ndarray
    trace_slope: np.ndarray
    vertex_values: np.ndarray

    def normal_at(self, tau):
        return self.trace_mean[:, None] + self.trace_slope[:, None] * (2.0 * np.asarray(tau) - 1.0)

    def midpoint_values(self):
        """Field at the three edge midpoints of each cell, shape (C, 3, 2)."""
        v = self.vertex_values
        return 0.5 * (v.sum(axis=1)[:, None, :] - v)

    def divergence(self, mesh):
        return np.einsum("ckd,ckd->c", self.vertex_values, mesh.lambda_gradients)


@dataclass
class TransportSystem:
    S: csr_matrix
    inflow_matrix: csr_matrix
    inflow_rhs: np.ndarray
    t: float
    has_inflow: bool = False
    # per DOF range of the inflow data on adjacent inflow edges (+-inf elsewhere)
    inflow_lo: np.ndarray = None
    inflow_hi: np.ndarray = None

    def inflow_term(self, U):
        """``l_i = l_h(u_h, phi_i)``."""
        if not self.has_inflow:
            return np.zeros_like(U)
        return self.inflow_matrix @ U - self.inflow_rhs


class Assembler:
    """Geometry, quadrature data and CSR scatter maps for one mesh."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        nb = mesh.coupling
        self.indptr = nb.indptr
        self.indices = nb.indices
        self.nnz = nb.nnz
        n = mesh.n_edges
        self.n = n
        rows = np.repeat(np.arange(n), np.diff(self.indptr))
        self.rows = rows
        self._keys = rows * n + self.indices

        ce = mesh.cell_edges
        self.cell_map = self._positions(ce[:, :, None], ce[:, None, :]).reshape(-1)

        interior = np.flatnonzero(~mesh.boundary)
        self.interior = interior
        ec = mesh.edge_cells[interior]
        dofs6 = np.concatenate([ce[ec[:, 0]], ce[ec[:, 1]]], axis=1)
        self.face_map = self._positions(dofs6[:, :, None], dofs6[:, None, :]).reshape(-1)
        self.face_offdiag = dofs6[:, :, None] != dofs6[:, None, :]
        # entries of pairs sharing a cell (the rest come from faces only)
        self.support = np.zeros(self.nnz, dtype=bool)
        self.support[self.cell_map] = True
        self.face_basis_m = self._trace_basis(interior, ec[:, 0], _G2_T)
        self.face_basis_p = self._trace_basis(interior, ec[:, 1], _G2_T)
        self.face_jump = np.concatenate([self.face_basis_m, -self.face_basis_p], axis=2)

        bnd = np.flatnonzero(mesh.boundary)
        self.bnd = bnd
        bc = mesh.edge_cells[bnd, 0]
        self.bnd_map = self._positions(ce[bc][:, :, None], ce[bc][:, None, :]).reshape(-1)
        self.bnd_dofs = ce[bc]
        self.bnd_basis = self._trace_basis(bnd, bc, _G2_T)
        va = mesh.vertices[mesh.edges[bnd, 0]]
        vb = mesh.vertices[mesh.edges[bnd, 1]]
        self.bnd_points = va[:, None, :] + _G2_T[None, :, None] * (vb - va)[:, None, :]

        self._prepare_projection()

    def _positions(self, r, c):
        keys = np.broadcast_arrays(r, c)
        k = (keys[0] * self.n + keys[1]).ravel()
        pos = np.searchsorted(self._keys, k)
        assert np.all(self._keys[pos] == k), "entry outside the DOF coupling pattern"
        return pos

    def _trace_basis(self, edges, cells, tau):
        """CR basis values of ``cells`` at points ``tau`` along ``edges``, shape (E, Q, 3)."""
        mesh = self.mesh
        va = mesh.vertices[mesh.edges[edges, 0]]
        vb = mesh.vertices[mesh.edges[edges, 1]]
        pts = va[:, None, :] + tau[None, :, None] * (vb - va)[:, None, :]
        lam = mesh.barycentric(cells[:, None], pts)
        return 1.0 - 2.0 * lam

    def _prepare_projection(self):
        mesh = self.mesh
        ce = mesh.cell_edges
        va = mesh.vertices[mesh.edges[:, 0]]
        vb = mesh.vertices[mesh.edges[:, 1]]
        self.moment_points = va[:, None, :] + _GM_T[None, :, None] * (vb - va)[:, None, :]
        # per cell vertex k: the two cell edges through it are k+1 and k+2
        e1 = ce[:, [1, 2, 0]]
        e2 = ce[:, [2, 0, 1]]
        n1 = mesh.normals[e1]
        n2 = mesh.normals[e2]
        det = n1[..., 0] * n2[..., 1] - n1[..., 1] * n2[..., 0]
        inv = np.empty(det.shape + (2, 2))
        inv[..., 0, 0] = n2[..., 1] / det
        inv[..., 0, 1] = -n1[..., 1] / det
        inv[..., 1, 0] = -n2[..., 0] / det
        inv[..., 1, 1] = n1[..., 0] / det
        self.vertex_inv = inv
        self.vertex_edges = (e1, e2)
        v = mesh.cells
        # sign of (2 tau - 1) at the vertex: -1 if the vertex is the edge start
        self.vertex_sign = (
            np.where(mesh.edges[e1, 0] == v, -1.0, 1.0),
            np.where(mesh.edges[e2, 0] == v, -1.0, 1.0),
        )

    # ------------------------------------------------------------------
    def project(self, field: VelocityField, t: float) -> DiscreteVelocity:
        mesh = self.mesh
        pts = self.moment_points
        bx, by = field(pts[..., 0], pts[..., 1], t)
        bn = bx * mesh.normals[:, 0:1] + by * mesh.normals[:, 1:2]
        mean = bn @ _GM_W
        slope = 3.0 * (bn @ (_GM_W * (2.0 * _GM_T - 1.0)))
        e1, e2 = self.vertex_edges
        s1, s2 = self.vertex_sign
        rhs = np.stack([mean[e1] + s1 * slope[e1], mean[e2] + s2 * slope[e2]], axis=-1)
        verts = np.einsum("ckab,ckb->cka", self.vertex_inv, rhs)
        return DiscreteVelocity(mean, slope, verts)

    def _csr(self, data):
        return csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def volume_data(self, vel: DiscreteVelocity):
        mesh = self.mesh
        bmid = vel.midpoint_values()
        loc = np.einsum("cid,cjd->cij", bmid, mesh.cr_gradients)
        loc *= (mesh.areas / 3.0)[:, None, None]
        return np.bincount(self.cell_map, loc.ravel(), minlength=self.nnz)

    def face_data(self, vel: DiscreteVelocity):
        mesh = self.mesh
        f = self.interior
        bn = vel.normal_at(_G2_T)[f]
        w = mesh.lengths[f][:, None] * _G2_W[None, :]
        # rows: test functions weighted by the upwind side; cols: jump u^- - u^+
        g = np.concatenate([(w * np.minimum(bn, 0.0))[..., None] * self.face_basis_m,
                            (w * np.maximum(bn, 0.0))[..., None] * self.face_basis_p], axis=2)
        loc = np.matmul(g.transpose(0, 2, 1), self.face_jump)
        return np.bincount(self.face_map, loc.ravel(), minlength=self.nnz)

    def inflow_parts(self, vel: DiscreteVelocity, u_in, t, matrix=True):
        """Inflow matrix data (None unless ``matrix``), rhs, inflow flag and
        per-DOF range of the inflow data seen by each DOF."""
        mesh = self.mesh
        b = self.bnd
        bn = vel.trace_mean[b][:, None] + vel.trace_slope[b][:, None] * (2.0 * _G2_T - 1.0)
        coeff = mesh.lengths[b][:, None] * _G2_W[None, :] * np.minimum(bn, 0.0)
        has = bool(np.any(coeff < 0.0))
        phi = self.bnd_basis
        mat = None
        if matrix:
            loc = np.einsum("fq,fqa,fqb->fab", coeff, phi, phi)
            mat = np.bincount(self.bnd_map, loc.ravel(), minlength=self.nnz)
        rhs = np.zeros(self.n)
        lo = np.full(self.n, np.inf)
        hi = np.full(self.n, -np.inf)
        if has and u_in is not None:
            pts = self.bnd_points
            g = np.broadcast_to(np.asarray(u_in(pts[..., 0], pts[..., 1], t), dtype=float),
                                pts.shape[:-1])
            np.add.at(rhs, self.bnd_dofs.ravel(), np.einsum("fq,fqa->fa", coeff * g, phi).ravel())
            inn = np.any(coeff < 0.0, axis=1)
            d = self.bnd_dofs[inn]
            gi = g[inn]
            np.minimum.at(lo, d, gi.min(axis=1)[:, None])
            np.maximum.at(hi, d, gi.max(axis=1)[:, None])
        return mat, rhs, has, (lo, hi)


_ASSEMBLERS: "weakref.WeakKeyDictionary[TriMesh, Assembler]" = weakref.WeakKeyDictionary()


def get_assembler(mesh: TriMesh) -> Assembler:
    asm = _ASSEMBLERS.get(mesh)
    if asm is None:
        asm = Assembler(mesh)
        _ASSEMBLERS[mesh] = asm
    return asm


def project_velocity(mesh, field, t=0.0) -> DiscreteVelocity:
    return get_assembler(mesh).project(field, t)


def assemble_A(mesh, field, t=0.0) -> csr_matrix:
    asm = get_assembler(mesh)
    return asm._csr(asm.volume_data(asm.project(field, t)))


def assemble_B(mesh, field, t=0.0) -> csr_matrix:
    asm = get_assembler(mesh)
    return asm._csr(asm.face_data(asm.project(field, t)))


def assemble_inflow(mesh, field, u_in, t=0.0):
    """Return ``(inflow_matrix, inflow_rhs)`` with ``l = inflow_matrix @ U - inflow_rhs``."""
    asm = get_assembler(mesh)
    mat, rhs, _, _ = asm.inflow_parts(asm.project(field, t), u_in, t)
    return asm._csr(mat), rhs


def assemble_system(mesh, field, u_in=None, t=0.0) -> TransportSystem:
    asm = get_assembler(mesh)
    vel = asm.project(field, t)
    s = asm.volume_data(vel) - asm.face_data(vel)
    mat, rhs, has, (lo, hi) = asm.inflow_parts(vel, u_in, t)
    return TransportSystem(asm._csr(s), asm._csr(mat), rhs, float(t), has, lo, hi)
