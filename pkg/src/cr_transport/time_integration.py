"""Forward Euler stages with limiting and the SSP-RK(3,3) driver.

A forward Euler stage assembles ``S`` at the stage time, builds the
low-order viscosity, checks the CFL bound and applies the chosen limiter.
SSP-RK(3,3) is a convex combination of such stages. When any stage fails
the CFL check the step restarts with ``dt <- c dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from scipy.sparse import csr_matrix

from . import _kernels
from .assembly import TransportSystem, get_assembler
from .cr_space import CRFunction, cr_interpolate, mass_vector
from .errors import BoundsViolatedByLowOrder, CflViolation, StepUnderflow
from .limiting import (
    GLOBAL,
    LOCAL,
    LimiterBounds,
    ViscosityMatrix,
    bilinear_viscosity,
    cfl_max_dt,
    inflow_alpha,
    min_viscosity,
    pattern_of,
)
from .mesh import TriMesh

__all__ = [
    "SchemeConfig",
    "RunResult",
    "Integrator",
    "euler_stage",
    "ssprk33_step",
    "run",
    "LIMITERS",
    "VISCOSITIES",
]

LIMITERS = ("galerkin", "low-order", "greedy", "fct-local", "fct-global")
VISCOSITIES = ("minimum", "bilinear")

_CFL_SLACK = 1e-12


@dataclass
class SchemeConfig:
    viscosity_kind: str = "minimum"
    limiter: str = "fct-global"
    cfl_target: float = 0.5
    reduction_factor: float = 0.5
    t_final: float = 1.0
    dt_initial: Optional[float] = None

    def __post_init__(self):
        if self.viscosity_kind not in VISCOSITIES:
            raise ValueError(f"viscosity_kind must be one of {VISCOSITIES}")
        if self.limiter not in LIMITERS:
            raise ValueError(f"limiter must be one of {LIMITERS}")
        if not 0.0 < self.reduction_factor < 1.0:
            raise ValueError("reduction factor must lie in (0, 1)")
        if not 0.0 < self.cfl_target <= 1.0:
            raise ValueError("cfl_target must lie in (0, 1]")
        if not self.t_final > 0.0:
            raise ValueError("t_final must be positive")
        if self.dt_initial is not None and not self.dt_initial > 0.0:
            raise ValueError("dt_initial must be positive")


@dataclass
class RunResult:
    final: CRFunction
    t: float
    steps: int
    rejected: int
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    u_min: list = field(default_factory=list)
    u_max: list = field(default_factory=list)
    # largest excursion of any Euler stage beyond the bounds it guarantees
    stage_violation: list = field(default_factory=list)
    initial_mass: float = 0.0
    initial_abs_mass: float = 0.0
    stage_calls: int = 0


@dataclass
class _Stage:
    system: TransportSystem
    V: Optional[ViscosityMatrix]
    dt_max: float
    # S - V (or S alone without viscosity), ready for fast products
    L: csr_matrix = None
    vel: object = None


class Integrator:
    """Stage and step operators for one (case, mesh, config) triple.

    ``case`` needs ``velocity`` (a ``VelocityField``), ``u_in`` (or None),
    ``u_in_time_dependent`` and the global data ranges ``u0_range`` and
    ``uin_range``. With ``dirichlet_boundary`` set, every boundary DOF is
    overwritten with ``u_in`` after each stage, on top of the weak inflow term.
    """

    def __init__(self, case, mesh: TriMesh, config: SchemeConfig, cache_steady=True):
        self.case = case
        self.mesh = mesh
        self.config = config
        self.m = mass_vector(mesh)
        self.asm = get_assembler(mesh)
        self.cache_steady = cache_steady and not case.velocity.time_dependent
        self._steady: Optional[_Stage] = None
        self._recent: dict = {}
        self.stage_calls = 0
        self.last_violation = 0.0
        self.strong = bool(getattr(case, "dirichlet_boundary", False)) and case.u_in is not None
        self.bnd = np.flatnonzero(mesh.boundary) if self.strong else None
        self.free = ~mesh.boundary if self.strong else slice(None)

    # ------------------------------------------------------------------
    def _viscosity(self, S):
        if self.config.limiter == "galerkin":
            return None
        if self.config.viscosity_kind == "bilinear":
            return bilinear_viscosity(S, self.mesh)
        return min_viscosity(S)

    def _build(self, t):
        case = self.case
        asm = self.asm
        vel = asm.project(case.velocity, t)
        S = asm._csr(asm.volume_data(vel) - asm.face_data(vel))
        mat, rhs, has, (lo, hi) = asm.inflow_parts(vel, case.u_in, t)
        # only boundary rows are populated; a private compressed copy keeps
        # the product cheap without touching the shared index buffer
        C = asm._csr(mat).copy()
        C.eliminate_zeros()
        sys_ = TransportSystem(S, C, rhs, float(t), has, lo, hi)
        V = self._viscosity(S)
        L = asm._csr(S.data - V.data) if V is not None else S
        return _Stage(sys_, V, cfl_max_dt(S, V, self.m), L, vel)

    def stage_data(self, t) -> _Stage:
        if self.cache_steady:
            if self._steady is None:
                self._steady = self._build(t)
            st = self._steady
            if (st.system.has_inflow and self.case.u_in is not None
                    and getattr(self.case, "u_in_time_dependent", True) and st.system.t != t):
                _, rhs, _, (lo, hi) = self.asm.inflow_parts(st.vel, self.case.u_in, t,
                                                             matrix=False)
                sys_ = TransportSystem(st.system.S, st.system.inflow_matrix, rhs, float(t), True,
                                       lo, hi)
                return _Stage(sys_, st.V, st.dt_max, st.L, st.vel)
            return st
        st = self._recent.get(t)
        if st is None:
            st = self._build(t)
            if len(self._recent) >= 4:
                self._recent.pop(next(iter(self._recent)))
            self._recent[t] = st
        return st

    def dt_bound(self, t) -> float:
        return self.stage_data(t).dt_max

    # ------------------------------------------------------------------
    def stage(self, U, t, dt):
        """One forward Euler stage ``U -> U + dt M^{-1} F(U)`` with limiting."""
        self.stage_calls += 1
        st = self.stage_data(t)
        if dt > st.dt_max * (1.0 + _CFL_SLACK):
            raise CflViolation(dt, st.dt_max)
        S = st.system.S
        m = self.m
        ip, ix = S.indptr, S.indices
        lim = self.config.limiter
        has_inflow = st.system.has_inflow and self.case.u_in is not None
        l = st.system.inflow_term(U) if has_inflow else None

        out = U - dt / m * (st.L @ U)
        if lim in ("galerkin", "low-order"):
            if lim == "galerkin" and l is not None:
                out += dt / m * l
            lo, hi = _kernels.row_extrema(ip, ix, U)
            return self._finish(out, lo, hi, t + dt)

        V = st.V
        if lim == "greedy":
            pat = pattern_of(S)
            vh = _kernels.greedy_viscosity(ip, ix, pat.diag, S.data, V.data, U, m, dt)
            out = U - dt / m * (self.asm._csr(S.data - vh) @ U)
            lo, hi = _kernels.row_extrema(ip, ix, U)
            if l is not None:
                # the greedy update lies in the local hull of U; the inflow term
                # is limited against that hull, widened by the incoming data
                # unless boundary DOFs already carry it
                if not self.strong:
                    lo, hi = _with_inflow(lo, hi, st.system)
                alpha = inflow_alpha(out, LimiterBounds(lo, hi), m, dt, l)
                out = out + dt / m * alpha * l
            return self._finish(out, lo, hi, t + dt)

        U_L = out
        if lim == "fct-local":
            umin, umax = _kernels.row_extrema(ip, ix, U_L)
            if has_inflow and not self.strong:
                umin, umax = _with_inflow(umin, umax, st.system)
        else:
            lo, hi = self.case.u0_range
            if has_inflow and self.case.uin_range is not None:
                lo, hi = min(lo, self.case.uin_range[0]), max(hi, self.case.uin_range[1])
            umin = np.full_like(U, lo)
            umax = np.full_like(U, hi)
        bounds = LimiterBounds(umin, umax, LOCAL if lim == "fct-local" else GLOBAL)
        _check_low_order(U_L, bounds)
        if l is None:
            al = np.zeros_like(U)
        else:
            al = inflow_alpha(U_L, bounds, m, dt, l) * l
        out = _kernels.fct_update(ip, ix, V.data, U, U_L, umin, umax, m, dt, al)
        return self._finish(out, umin, umax, t + dt)

    def _finish(self, out, lo, hi, t_end):
        """Impose boundary data if required and record the stage excursion."""
        f = self.free
        self.last_violation = _excess(out[f], lo[f], hi[f])
        if self.strong:
            self._impose(out, t_end)
        return out

    def _impose(self, out, t):
        p = self.mesh.midpoints[self.bnd]
        out[self.bnd] = self.case.u_in(p[:, 0], p[:, 1], t)

    def step(self, U, t, dt):
        """One SSP-RK(3,3) step; returns the new state and the worst stage excursion."""
        y1 = self.stage(U, t, dt)
        v = self.last_violation
        y2 = 0.75 * U + 0.25 * self.stage(y1, t + dt, dt)
        v = max(v, self.last_violation)
        out = U / 3.0 + (2.0 / 3.0) * self.stage(y2, t + 0.5 * dt, dt)
        v = max(v, self.last_violation)
        if self.strong:
            self._impose(out, t + dt)
        return out, v


def _with_inflow(lo, hi, system):
    """Local bounds widened by the inflow data seen on adjacent inflow edges."""
    if system.inflow_lo is None:
        return lo, hi
    return np.minimum(lo, system.inflow_lo), np.maximum(hi, system.inflow_hi)


def _excess(u, lo, hi):
    if u.size == 0:
        return 0.0
    return float(max(np.max(lo - u), np.max(u - hi), 0.0))


def _check_low_order(U_L, bounds, rtol=1e-12):
    scale = max(1.0, float(np.abs(bounds.u_min).max()), float(np.abs(bounds.u_max).max()))
    if _excess(U_L, bounds.u_min, bounds.u_max) > rtol * scale:
        raise BoundsViolatedByLowOrder("low-order solution leaves the limiter bounds")


def euler_stage(U: CRFunction, t, dt, config: SchemeConfig, case) -> CRFunction:
    integ = Integrator(case, U.mesh, config)
    return CRFunction(U.mesh, integ.stage(U.values, t, dt))


def ssprk33_step(U: CRFunction, t, dt, config: SchemeConfig, case) -> CRFunction:
    integ = Integrator(case, U.mesh, config)
    return CRFunction(U.mesh, integ.step(U.values, t, dt)[0])


def run(case, mesh: TriMesh, config: SchemeConfig, U0=None, progress=None) -> RunResult:
    """Integrate ``case`` on ``mesh`` up to ``config.t_final``.

    The step size is ``cfl_target`` times the CFL bound at the start of each
    step (or ``dt_initial`` if given). Any stage violating its CFL bound makes
    the step restart with ``dt <- c dt``.
    """
    integ = Integrator(case, mesh, config)
    m = integ.m
    T = float(config.t_final)
    U = cr_interpolate(case.u0, mesh).values if U0 is None else np.array(U0, dtype=float)

    res = RunResult(final=None, t=0.0, steps=0, rejected=0)
    res.initial_mass = math.fsum(m * U)
    res.initial_abs_mass = math.fsum(m * np.abs(U))

    t = 0.0
    fixed = config.dt_initial
    dt = fixed if fixed is not None else config.cfl_target * integ.dt_bound(0.0)
    if not np.isfinite(dt):
        dt = T
    while t < T:
        last = t + dt >= T * (1.0 - 1e-12)
        step_dt = T - t if last else dt
        try:
            U_new, viol = integ.step(U, t, step_dt)
        except CflViolation:
            res.rejected += 1
            dt = config.reduction_factor * step_dt
            if dt < 1e-14 * T:
                raise StepUnderflow(f"time step {dt:.3e} underflowed at t={t:.6e}")
            continue
        U = U_new
        t = T if last else t + step_dt
        res.steps += 1
        res.times.append(t)
        res.mass.append(float(np.sum(m * U)))
        res.u_min.append(float(U.min()))
        res.u_max.append(float(U.max()))
        res.stage_violation.append(viol)
        if progress is not None:
            progress(t, U)
        if t < T:
            if fixed is not None:
                dt = fixed
            else:
                dt = config.cfl_target * integ.dt_bound(t)
                if not np.isfinite(dt):
                    dt = T - t
    res.final = CRFunction(mesh, U)
    res.t = t
    res.stage_calls = integ.stage_calls
    return res
