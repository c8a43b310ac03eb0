"""Benchmark problems with exact solutions and the convergence-study driver.

Mesh sizes follow the usual table convention: ``h`` is the spacing of the
square grid, so a case on a domain of width ``W`` uses ``n = W / h`` squares
per direction.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .assembly import VelocityField
from .cr_space import error_norms
from .mesh import TriMesh, build_uniform_mesh, refine_half
from .reconstruction import reconstruct
from .time_integration import RunResult, SchemeConfig, run

__all__ = [
    "TestCase",
    "ConvergenceRow",
    "ConvergenceStudy",
    "DmpReport",
    "case_library",
    "get_case",
    "convergence_rates",
    "make_rows",
    "convergence_study",
    "dmp_audit",
    "max_workers",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TestCase:
    """A transport problem: domain, velocity, data and (optionally) exact solution."""

    __test__ = False  # not a pytest class

    name: str
    bbox: tuple
    velocity: VelocityField
    u0: Callable
    u0_range: tuple
    t_final: float = 1.0
    u_in: Optional[Callable] = None
    uin_range: Optional[tuple] = None
    u_in_time_dependent: bool = True
    exact: Optional[Callable] = None
    cfl_target: float = 0.5
    table_h: tuple = ()
    has_inflow: bool = False
    # impose u_in strongly on every boundary DOF (inflow and outflow alike)
    dirichlet_boundary: bool = False

    @property
    def width(self):
        return self.bbox[1] - self.bbox[0]

    def n_for_h(self, h):
        return int(round(self.width / h))

    def mesh(self, n) -> TriMesh:
        return build_uniform_mesh(self.bbox, n)

    @property
    def bounds(self):
        lo, hi = self.u0_range
        if self.has_inflow and self.uin_range is not None:
            lo, hi = min(lo, self.uin_range[0]), max(hi, self.uin_range[1])
        return float(lo), float(hi)

    def config(self, limiter="fct-global", **kw) -> SchemeConfig:
        kw.setdefault("cfl_target", self.cfl_target)
        kw.setdefault("t_final", self.t_final)
        return SchemeConfig(limiter=limiter, **kw)


# --------------------------------------------------------------------------
# velocity fields and data

def _rotated(u0, x, y, t):
    c, s = np.cos(TWO_PI * t), np.sin(TWO_PI * t)
    return u0(x * c + y * s, -x * s + y * c)


def _hump(x, y):
    r2 = ((x - 0.3) ** 2 + y ** 2) / 0.25 ** 2
    return 0.5 * (1.0 - np.tanh(r2 - 1.0))


def _solid_body(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r0 = 0.3
    dd = np.hypot(x, y - 0.5)
    dc = np.hypot(x, y + 0.5)
    dh = np.hypot(x + 0.5, y)
    slotted = (dd <= r0) & ((np.abs(x) >= 0.05) | (y >= 0.7))
    cone = 1.0 - dc / r0
    hump = 0.25 * (1.0 + np.cos(np.pi * np.minimum(dh / r0, 1.0)))
    return np.select([slotted, dc <= r0, dh <= r0], [1.0, cone, hump], 0.0)


def _rotation(x, y, t):
    return -TWO_PI * y, TWO_PI * x


def _swirl(x, y, t):
    c = np.cos(np.pi * t)
    bx = -2.0 * np.sin(np.pi * y) * np.cos(np.pi * y) * np.sin(np.pi * x) ** 2 * c
    by = 2.0 * np.sin(np.pi * x) * np.cos(np.pi * x) * np.sin(np.pi * y) ** 2 * c
    return bx, by


def _swirl_u0(x, y):
    return np.sin(TWO_PI * x) * np.sin(TWO_PI * y)


def _swirl_exact(x, y, t):
    # closed form only where the flow has returned to its start
    if abs(t - round(t)) > 1e-12:
        raise ValueError("the swirling flow has a closed-form solution only at integer times")
    return _swirl_u0(x, y)


SIGMA, OMEGA, CX, CY = -0.6, 4.0, 0.5, 0.5


def _compress(x, y, t):
    dx, dy = x - CX, y - CY
    return SIGMA * dx - OMEGA * dy, OMEGA * dx + SIGMA * dy


def _packet(x, y):
    return np.exp(-120.0 * ((x - 0.72) ** 2 + (y - 0.5) ** 2)) * np.cos(10.0 * np.pi * x)


def compress_foot(x, y, t):
    """Foot of the characteristic through ``(x, y)`` at time ``t``."""
    e = np.exp(-SIGMA * t)
    c, s = np.cos(OMEGA * t), np.sin(OMEGA * t)
    dx, dy = x - CX, y - CY
    return CX + e * (c * dx + s * dy), CY + e * (-s * dx + c * dy)


def _packet_exact(x, y, t):
    return _packet(*compress_foot(x, y, t))


@lru_cache(maxsize=None)
def _packet_range():
    # dense sampling followed by local polishing of the extrema
    g = np.linspace(0.0, 1.0, 1001)
    X, Y = np.meshgrid(g, g)
    vals = _packet(X, Y)
    polish = []
    for sign, k in ((1.0, np.argmin(vals)), (-1.0, np.argmax(vals))):
        x0 = np.array([X.flat[k], Y.flat[k]])
        res = minimize(lambda p: sign * _packet(p[0], p[1]), x0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15})
        polish.append(sign * res.fun)
    return float(min(vals.min(), polish[0])), float(max(vals.max(), polish[1]))


def case_library() -> dict:
    """The five benchmark problems keyed by name."""
    hump_max = 0.5 * (1.0 + np.tanh(1.0))
    lib = [
        TestCase(
            name="smooth-rotation",
            bbox=(-1.0, 1.0, -1.0, 1.0),
            velocity=VelocityField(_rotation, divergence_free=True, time_dependent=False),
            u0=_hump,
            u0_range=(0.0, hump_max),
            u_in=lambda x, y, t: _rotated(_hump, x, y, t),
            uin_range=(0.0, hump_max),
            exact=lambda x, y, t: _rotated(_hump, x, y, t),
            table_h=(0.1, 0.05, 0.025, 0.0125, 0.00625),
            has_inflow=True,
        ),
        TestCase(
            name="swirling",
            bbox=(0.0, 1.0, 0.0, 1.0),
            velocity=VelocityField(_swirl, divergence_free=True, impermeable=True, time_dependent=True),
            u0=_swirl_u0,
            u0_range=(-1.0, 1.0),
            exact=_swirl_exact,
            table_h=(0.05, 0.025, 0.0125, 0.00625, 0.003125),
        ),
        TestCase(
            name="inflow",
            bbox=(0.0, 1.0, 0.0, 1.0),
            velocity=VelocityField(lambda x, y, t: (1.0, 1.0), divergence_free=True, time_dependent=False),
            u0=lambda x, y: np.sin(np.pi * (x + y)),
            u0_range=(-1.0, 1.0),
            u_in=lambda x, y, t: np.sin(np.pi * (x + y - 2.0 * t)),
            uin_range=(-1.0, 1.0),
            exact=lambda x, y, t: np.sin(np.pi * (x + y - 2.0 * t)),
            table_h=(0.05, 0.025, 0.0125, 0.00625, 0.003125),
            has_inflow=True,
            dirichlet_boundary=True,
        ),
        TestCase(
            name="solid-body",
            bbox=(-1.0, 1.0, -1.0, 1.0),
            velocity=VelocityField(_rotation, divergence_free=True, time_dependent=False),
            u0=_solid_body,
            u0_range=(0.0, 1.0),
            u_in=lambda x, y, t: np.zeros(np.broadcast(x, y).shape),
            uin_range=(0.0, 0.0),
            u_in_time_dependent=False,
            exact=lambda x, y, t: _rotated(_solid_body, x, y, t),
            table_h=(0.1, 0.05, 0.025, 0.0125, 0.00625),
            has_inflow=True,
        ),
        TestCase(
            name="non-solenoidal",
            bbox=(0.0, 1.0, 0.0, 1.0),
            velocity=VelocityField(_compress, time_dependent=False),
            u0=_packet,
            u0_range=_packet_range(),
            u_in=_packet_exact,
            uin_range=_packet_range(),
            exact=_packet_exact,
            t_final=0.5,
            cfl_target=0.1,
            table_h=(0.05, 0.025, 0.0125, 0.00625, 0.003125),
            has_inflow=True,
        ),
    ]
    return {c.name: c for c in lib}


def get_case(name) -> TestCase:
    lib = case_library()
    try:
        return lib[name]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {', '.join(lib)}") from None


# --------------------------------------------------------------------------
# convergence tables

@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    l2: float
    rate: Optional[float] = None
    linf: Optional[float] = None
    linf_rate: Optional[float] = None


def convergence_rates(errors):
    """``log2(e_{k-1} / e_k)`` for consecutive entries; the first is None."""
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else float("nan"))
    return out


def make_rows(hs, l2, linf=None):
    r2 = convergence_rates(l2)
    ri = convergence_rates(linf) if linf is not None else [None] * len(hs)
    return [ConvergenceRow(float(h), float(e), r, None if linf is None else float(linf[k]), ri[k])
            for k, (h, e, r) in enumerate(zip(hs, l2, r2))]


@dataclass
class ConvergenceStudy:
    case: str
    limiter: str
    cr: list
    reconstruction: list
    steps: list = field(default_factory=list)


def max_workers(default=1):
    env = os.environ.get("CR_TRANSPORT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return default


def _single(case: TestCase, config: SchemeConfig, n: int, mesh: TriMesh | None = None):
    mesh = case.mesh(n) if mesh is None else mesh
    res = run(case, mesh, config)
    T = res.t
    cr_err = error_norms(res.final, case.exact, T)
    rec = reconstruct(res.final, refine_half(mesh), _boundary_data(case), T)
    rec_err = error_norms(rec, case.exact, T)
    h = case.width / n
    return h, cr_err, rec_err, res.steps


def _boundary_data(case):
    return case.u_in if case.u_in is not None else None


def _worker(args):
    name, config, n = args
    return _single(get_case(name), config, n)


def convergence_study(case: TestCase, config: SchemeConfig, ns, workers=None) -> ConvergenceStudy:
    """Run ``case`` on uniform meshes with ``n`` squares per side for every ``n``.

    Errors of the CR solution and of its h/2 reconstruction are measured
    against the exact solution at the final time.
    """
    ns = [int(n) for n in ns]
    if len(ns) < 2:
        raise ValueError("a convergence study needs at least two mesh sizes")
    if case.exact is None:
        raise ValueError(f"case {case.name} has no exact solution")
    workers = max_workers() if workers is None else workers
    known = case.name in case_library()
    if workers > 1 and known and len(ns) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(ns))) as pool:
            out = list(pool.map(_worker, [(case.name, config, n) for n in ns]))
    else:
        out = [_single(case, config, n) for n in ns]
    out.sort(key=lambda r: -r[0])
    hs = [r[0] for r in out]
    cr = make_rows(hs, [r[1].l2 for r in out], [r[1].linf for r in out])
    rec = make_rows(hs, [r[2].l2 for r in out], [r[2].linf for r in out])
    return ConvergenceStudy(case.name, config.limiter, cr, rec, [r[3] for r in out])


# --------------------------------------------------------------------------
# maximum principle audit

@dataclass(frozen=True)
class DmpReport:
    worst: float
    worst_step: int
    stage_worst: float
    steps: int

    def ok(self, tol=1e-12):
        return self.worst <= tol


def dmp_audit(result: RunResult, bounds) -> DmpReport:
    """Largest excursion of any accepted step's DOF range beyond ``bounds``.

    ``stage_worst`` reports the largest excursion of a single Euler stage
    beyond the bounds that stage is built to respect (local hull or FCT
    bounds), as recorded by the integrator.
    """
    lo, hi = bounds
    if not result.u_min:
        return DmpReport(0.0, -1, 0.0, 0)
    below = lo - np.asarray(result.u_min)
    above = np.asarray(result.u_max) - hi
    exc = np.maximum(np.maximum(below, above), 0.0)
    k = int(np.argmax(exc))
    stage = float(max(result.stage_violation)) if result.stage_violation else 0.0
    return DmpReport(float(exc[k]), k, stage, len(exc))
