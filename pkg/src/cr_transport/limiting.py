"""Low-order viscosities, greedy scaling and FCT correction.

Every matrix here shares the CSR pattern of the transport operator ``S``,
so the work is done directly on ``.data`` arrays. ``CsrPattern`` holds the
index maps (row of each entry, diagonal slots, position of the transposed
entry) that make the per-pair formulas vectorised.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .errors import BoundsViolatedByLowOrder, CflViolation
from .mesh import TriMesh

__all__ = [
    "CsrPattern",
    "ViscosityMatrix",
    "LimiterBounds",
    "FctWorkspace",
    "LOCAL",
    "GLOBAL",
    "pattern_of",
    "min_viscosity",
    "bilinear_viscosity",
    "cfl_max_dt",
    "low_order_update",
    "theta_gamma",
    "greedy_psi",
    "scale_viscosity",
    "fct_correct",
    "inflow_alpha",
    "compute_bounds",
    "local_extrema",
]

LOCAL = "local"
GLOBAL = "global"

# relative slack when checking dt against the CFL bound and U^L against bounds
_CFL_SLACK = 1e-12
_BOUND_SLACK = 1e-12


class CsrPattern:
    """Index helpers for a square CSR pattern with sorted indices and full diagonal."""

    def __init__(self, indptr, indices):
        self.indptr = indptr
        self.indices = indices
        n = len(indptr) - 1
        self.n = n
        self.nnz = len(indices)
        self.rows = np.repeat(np.arange(n), np.diff(indptr))
        self.starts = indptr[:-1]
        keys = self.rows * n + indices
        # a trailing sentinel keeps failed lookups in range
        padded = np.append(keys, -1)
        self.diag = np.searchsorted(keys, np.arange(n) * (n + 1))
        if not np.all(padded[self.diag] == np.arange(n) * (n + 1)):
            raise ValueError("pattern must contain the diagonal")
        tkeys = indices.astype(np.int64) * n + self.rows
        self.transpose = np.searchsorted(keys, tkeys)
        if not np.all(padded[self.transpose] == tkeys):
            raise ValueError("pattern must be structurally symmetric")
        self.offdiag = self.rows != indices
        self.upper = self.rows < indices

    def row_sum(self, data):
        return np.bincount(self.rows, data, minlength=self.n)

    def row_max(self, values):
        return np.maximum.reduceat(values, self.starts)

    def row_min(self, values):
        return np.minimum.reduceat(values, self.starts)

    def matrix(self, data):
        return csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def matvec(self, data, x):
        return np.bincount(self.rows, data * x[self.indices], minlength=self.n)


_PATTERNS: dict = {}


def pattern_of(A: csr_matrix) -> CsrPattern:
    """Cached ``CsrPattern`` for the structure of ``A``.

    Matrices assembled on the same mesh hold views of one ``indices`` buffer,
    whose address is the cache key (a reference is kept so it is not reused).
    """
    ix = A.indices
    key = (ix.__array_interface__["data"][0], ix.shape, ix.strides, A.shape)
    hit = _PATTERNS.get(key)
    if hit is not None:
        return hit[1]
    pat = CsrPattern(A.indptr, ix)
    if len(_PATTERNS) > 16:
        _PATTERNS.pop(next(iter(_PATTERNS)))
    _PATTERNS[key] = (ix, pat)
    return pat


@dataclass
class ViscosityMatrix:
    """Symmetric viscosity with zero row sums on the pattern of ``S``."""

    data: np.ndarray
    pattern: CsrPattern

    @property
    def matrix(self) -> csr_matrix:
        return self.pattern.matrix(self.data)

    @property
    def diagonal(self):
        return self.data[self.pattern.diag]

    def check(self, S=None, rtol=1e-14):
        """Return (symmetric, zero row sums, v_ij >= s_ij) as booleans."""
        p = self.pattern
        sym = bool(np.all(self.data == self.data[p.transpose]))
        scale = np.abs(self.data).max(initial=0.0)
        rows = bool(np.all(np.abs(p.row_sum(self.data)) <= rtol * scale * 16))
        dom = True
        if S is not None:
            dom = bool(np.all(self.data[p.offdiag] >= S.data[p.offdiag]))
        return sym, rows, dom


def _close_diagonal(off, pat: CsrPattern):
    off[pat.diag] = 0.0
    off[pat.diag] = -pat.row_sum(off)
    return off


@dataclass
class LimiterBounds:
    u_min: np.ndarray
    u_max: np.ndarray
    mode: str = LOCAL

    def __post_init__(self):
        if np.any(self.u_min > self.u_max):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class FctWorkspace:
    t: np.ndarray
    P_plus: np.ndarray
    P_minus: np.ndarray
    Q_plus: np.ndarray
    Q_minus: np.ndarray
    R_plus: np.ndarray
    R_minus: np.ndarray
    l: np.ndarray
    alpha: np.ndarray


# --------------------------------------------------------------------------
# viscosities

def min_viscosity(S: csr_matrix) -> ViscosityMatrix:
    """``v_ij = max(0, s_ij, s_ji)`` off the diagonal, zero row sums."""
    pat = pattern_of(S)
    s = S.data
    off = np.maximum(0.0, np.maximum(s, s[pat.transpose]))
    return ViscosityMatrix(_close_diagonal(off, pat), pat)


def bilinear_viscosity(S: csr_matrix, mesh: TriMesh) -> ViscosityMatrix:
    """Cellwise viscosity ``nu_K = max(0, max_{l != k in K} s_lk)``.

    Pairs sharing a cell take the largest ``nu_K`` of their common cells.
    Pairs that only meet through the upwind face term (they share no cell)
    use the same construction on the two-cell patch around that face.
    """
    from .assembly import get_assembler

    asm = get_assembler(mesh)
    pat = pattern_of(S)
    s = S.data
    if s.shape != (asm.nnz,):
        raise ValueError("S does not match the mesh pattern")

    cell_vals = s[asm.cell_map].reshape(-1, 3, 3)
    off3 = ~np.eye(3, dtype=bool)
    nu_cell = np.maximum(cell_vals[:, off3].max(axis=1), 0.0)

    face_vals = s[asm.face_map].reshape(-1, 6, 6)
    nu_face = np.maximum(np.where(asm.face_offdiag, face_vals, -np.inf).max(axis=(1, 2)), 0.0)

    v = np.zeros(pat.nnz)
    np.maximum.at(v, asm.cell_map.reshape(-1, 9)[:, off3.ravel()].ravel(),
                  np.repeat(nu_cell, 6))
    vf = np.zeros(pat.nnz)
    fmask = asm.face_offdiag.reshape(-1, 36)
    np.maximum.at(vf, asm.face_map.reshape(-1, 36)[fmask],
                  np.repeat(nu_face, fmask.sum(axis=1)))
    far = ~asm.support
    v[far] = vf[far]
    return ViscosityMatrix(_close_diagonal(v, pat), pat)


def cfl_max_dt(S: csr_matrix, V: ViscosityMatrix | None, m) -> float:
    """``min_i m_i / (s_ii - v_ii)`` over rows with a positive denominator."""
    pat = pattern_of(S)
    d = S.data[pat.diag]
    if V is not None:
        d = d - V.data[pat.diag]
    pos = d > 0
    if not pos.any():
        return np.inf
    return float(np.min(m[pos] / d[pos]))


def low_order_update(U, S, V: ViscosityMatrix, m, dt, dt_max=None):
    """``U - dt M^{-1} (S - V) U``; raises ``CflViolation`` past the CFL bound."""
    if dt_max is None:
        dt_max = cfl_max_dt(S, V, m)
    if dt > dt_max * (1.0 + _CFL_SLACK):
        raise CflViolation(dt, dt_max)
    pat = V.pattern
    return U - (dt / m) * pat.matvec(S.data - V.data, U)


# --------------------------------------------------------------------------
# greedy limiting

def local_extrema(U, pat: CsrPattern):
    vals = U[pat.indices]
    return pat.row_min(vals), pat.row_max(vals)


def theta_gamma(U, S, V_L: ViscosityMatrix, m, dt):
    """Return ``(theta, gamma, gamma_plus, gamma_minus)`` per DOF."""
    pat = V_L.pattern
    lo, hi = local_extrema(U, pat)
    span = hi - lo
    flat = span == 0
    theta = np.where(flat, 0.5, (U - lo) / np.where(flat, 1.0, span))
    theta = np.clip(theta, 0.0, 1.0)
    gamma = dt / m * (S.data[pat.diag] - V_L.data[pat.diag])
    uj = U[pat.indices]
    ui = U[pat.rows]
    av = np.abs(V_L.data)
    gp = dt / m * np.bincount(pat.rows, np.where(ui < uj, av, 0.0), minlength=pat.n)
    gm = dt / m * np.bincount(pat.rows, np.where(ui > uj, av, 0.0), minlength=pat.n)
    return theta, gamma, gp, gm


def _ratio(num, den):
    # zero denominators (including 0/0) impose no constraint
    out = np.full(np.shape(num), np.inf)
    nz = den != 0
    # overflow to inf is the intended answer for tiny denominators
    with np.errstate(over="ignore"):
        np.divide(num, den, out=out, where=nz)
    return out


def greedy_psi(theta, gamma, gamma_plus, gamma_minus):
    """Smallest scaling allowed by the local bound lemma with ``k = 1``."""
    theta = np.asarray(theta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    r = np.minimum(_ratio(1.0 - theta, theta * gamma_minus),
                   _ratio(theta, (1.0 - theta) * gamma_plus))
    slack = 1.0 - gamma
    # gamma >= 1 leaves no room for antidiffusion
    with np.errstate(invalid="ignore"):
        prod = np.where(slack <= 0, 0.0, slack * r)
    return np.clip(1.0 - prod, 0.0, 1.0)


def scale_viscosity(psi, V_L: ViscosityMatrix) -> ViscosityMatrix:
    """``v_ij = max(psi_i, psi_j) v^L_ij`` off the diagonal, zero row sums."""
    pat = V_L.pattern
    psi = np.asarray(psi, dtype=float)
    off = np.maximum(psi[pat.rows], psi[pat.indices]) * V_L.data
    return ViscosityMatrix(_close_diagonal(off, pat), pat)


# --------------------------------------------------------------------------
# flux correction

def inflow_alpha(U_base, bounds: LimiterBounds, m, dt, inflow_l):
    """Scaling of the inflow term keeping ``U_base + dt/m alpha l`` within bounds."""
    alpha = np.ones_like(U_base)
    nz = inflow_l != 0
    if nz.any():
        li = inflow_l[nz]
        qmax = m[nz] / dt * (bounds.u_max[nz] - U_base[nz])
        qmin = m[nz] / dt * (bounds.u_min[nz] - U_base[nz])
        alpha[nz] = np.minimum(1.0, np.maximum(0.0, np.maximum(qmax / li, qmin / li)))
    return alpha


def fct_correct(U_n, U_L_next, V_L: ViscosityMatrix, bounds: LimiterBounds, m, dt,
                inflow_l=None, workspace=False):
    """Limit the antidiffusive fluxes ``t_ij = -v_ij (U_j - U_i)``.

    With ``inflow_l`` the inflow contribution is limited as well (scaled by
    ``alpha_i``) and the flux budget ``Q`` is reduced accordingly.
    """
    pat = V_L.pattern
    umin, umax = bounds.u_min, bounds.u_max
    scale = max(1.0, float(np.max(np.abs(umax))), float(np.max(np.abs(umin))))
    tol = _BOUND_SLACK * scale
    if np.any(U_L_next < umin - tol) or np.any(U_L_next > umax + tol):
        worst = max(float(np.max(umin - U_L_next)), float(np.max(U_L_next - umax)))
        raise BoundsViolatedByLowOrder(f"low-order solution leaves bounds by {worst:.3e}")

    t = V_L.data * (U_n[pat.rows] - U_n[pat.indices])
    t[pat.diag] = 0.0
    P_plus = np.bincount(pat.rows, np.maximum(t, 0.0), minlength=pat.n)
    P_minus = np.bincount(pat.rows, np.minimum(t, 0.0), minlength=pat.n)

    if inflow_l is None:
        alpha = np.ones(pat.n)
        al = np.zeros(pat.n)
    else:
        alpha = inflow_alpha(U_L_next, bounds, m, dt, inflow_l)
        al = alpha * inflow_l
    # clamping only absorbs roundoff in U^L relative to its bounds
    Q_plus = np.maximum(m / dt * (umax - U_L_next) - al, 0.0)
    Q_minus = np.minimum(m / dt * (umin - U_L_next) - al, 0.0)
    R_plus = np.minimum(1.0, _ratio(Q_plus, P_plus))
    R_minus = np.minimum(1.0, _ratio(Q_minus, P_minus))

    r, c = pat.rows, pat.indices
    l = np.where(t >= 0, np.minimum(R_plus[r], R_minus[c]), np.minimum(R_minus[r], R_plus[c]))
    # one coefficient per unordered pair
    low = ~pat.upper
    l[low] = l[pat.transpose[low]]
    l[pat.diag] = 0.0

    flux = np.bincount(r, l * t, minlength=pat.n)
    U_next = U_L_next + dt / m * (flux + al)
    if workspace:
        return U_next, FctWorkspace(t, P_plus, P_minus, Q_plus, Q_minus, R_plus, R_minus, l, alpha)
    return U_next


def compute_bounds(mode, U_L_next, adjacency=None, u0_range=None, uin_range=None,
                   inflow_hull=None) -> LimiterBounds:
    """Local bounds from neighbours of ``U_L_next`` or constant global bounds.

    ``adjacency`` is any CSR matrix (or ``CsrPattern``) whose pattern defines
    the neighbourhoods. Global bounds are the hull of the two data ranges.
    ``inflow_hull`` (per-DOF ``(lo, hi)``, +-inf where unused) widens local
    bounds by the inflow data next to each DOF.
    """
    n = len(U_L_next)
    if mode == LOCAL:
        pat = adjacency if isinstance(adjacency, CsrPattern) else pattern_of(adjacency)
        lo, hi = local_extrema(U_L_next, pat)
        if inflow_hull is not None:
            lo = np.minimum(lo, inflow_hull[0])
            hi = np.maximum(hi, inflow_hull[1])
        return LimiterBounds(lo, hi, LOCAL)
    if mode == GLOBAL:
        lo, hi = u0_range
        if uin_range is not None:
            lo, hi = min(lo, uin_range[0]), max(hi, uin_range[1])
        return LimiterBounds(np.full(n, float(lo)), np.full(n, float(hi)), GLOBAL)
    raise ValueError(f"unknown bounds mode {mode!r}")
