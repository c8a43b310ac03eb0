from dataclasses import replace

import numpy as np
import pytest

from cr_transport.benchmarks import (
    ConvergenceRow,
    case_library,
    compress_foot,
    convergence_rates,
    convergence_study,
    dmp_audit,
    get_case,
    make_rows,
)
from cr_transport.time_integration import RunResult, run

# printed L2 errors with their printed rates
PRINTED = {
    "rotation greedy": ([6.94e-02, 9.14e-03, 1.36e-03, 2.48e-04, 4.86e-05], [2.92, 2.75, 2.45, 2.35]),
    "rotation local": ([4.34e-02, 7.34e-03, 1.01e-03, 1.98e-04, 4.13e-05], [2.56, 2.86, 2.35, 2.26]),
    "rotation global": ([2.03e-02, 5.49e-03, 7.04e-04, 1.50e-04, 3.34e-05], [1.89, 2.96, 2.23, 2.17]),
    "swirl global": ([4.65e-03, 1.07e-03, 2.58e-04, 6.40e-05, 1.60e-05], [2.12, 2.05, 2.01, 2.00]),
    "inflow greedy": ([7.17e-02, 3.39e-02, 1.61e-02, 7.76e-03, 3.80e-03], [1.08, 1.08, 1.05, 1.03]),
    "inflow local": ([4.06e-02, 1.66e-02, 6.92e-03, 3.10e-03, 1.44e-03], [1.29, 1.26, 1.16, 1.11]),
    "inflow global": ([2.93e-03, 7.40e-04, 1.86e-04, 4.66e-05, 1.17e-05], [1.99, 1.99, 2.00, 2.00]),
    "solid global": ([2.69e-01, 1.93e-01, 1.34e-01, 9.98e-02, 7.44e-02], [0.48, 0.53, 0.42, 0.42]),
    "packet l2": ([5.30e-02, 2.27e-02, 3.74e-03, 7.10e-04, 1.38e-04], [1.22, 2.60, 2.40, 2.37]),
    "packet linf": ([8.38e-01, 4.70e-01, 1.44e-01, 4.52e-02, 1.49e-02], [0.83, 1.71, 1.67, 1.60]),
}


@pytest.mark.parametrize("row", sorted(PRINTED))
def test_printed_rates_reproduce(row):
    errs, rates = PRINTED[row]
    got = convergence_rates(errs)
    assert got[0] is None
    assert np.allclose(got[1:], rates, rtol=0, atol=0.01)


def test_make_rows():
    rows = make_rows([0.1, 0.05], [4.0, 1.0], [2.0, 1.0])
    assert rows[0] == ConvergenceRow(0.1, 4.0, None, 2.0, None)
    assert rows[1].rate == 2.0 and rows[1].linf_rate == 1.0


def rk4_foot(beta, x, y, t, steps=400):
    """Trace characteristics backwards from time t to 0 with classical RK4."""
    p = np.array([x, y], dtype=float)
    h = -t / steps
    s = t
    f = lambda q, tt: np.array(beta(q[0], q[1], tt), dtype=float)
    for _ in range(steps):
        k1 = f(p, s)
        k2 = f(p + 0.5 * h * k1, s + 0.5 * h)
        k3 = f(p + 0.5 * h * k2, s + 0.5 * h)
        k4 = f(p + h * k3, s + h)
        p = p + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
    return p


@pytest.mark.parametrize("name,t", [("smooth-rotation", 0.37), ("solid-body", 0.8),
                                    ("non-solenoidal", 0.5), ("inflow", 0.2)])
def test_exact_solution_follows_characteristics(name, t, rng):
    case = get_case(name)
    x0, x1, y0, y1 = case.bbox
    checked = 0
    for _ in range(40):
        x, y = rng.uniform(x0, x1), rng.uniform(y0, y1)
        fx, fy = rk4_foot(case.velocity, x, y, t)
        if not (x0 < fx < x1 and y0 < fy < y1):
            continue
        assert abs(case.exact(x, y, t) - case.u0(fx, fy)) < 1e-6
        checked += 1
    assert checked > 5


def test_compress_foot_matches_tracer(rng):
    case = get_case("non-solenoidal")
    for _ in range(10):
        x, y = rng.uniform(0, 1, 2)
        assert np.allclose(compress_foot(x, y, 0.3), rk4_foot(case.velocity, x, y, 0.3), atol=1e-8)


def test_swirl_returns_to_start(rng):
    case = get_case("swirling")
    for _ in range(10):
        x, y = rng.uniform(0.05, 0.95, 2)
        assert np.allclose(rk4_foot(case.velocity, x, y, 1.0, 2000), [x, y], atol=1e-6)
    with pytest.raises(ValueError):
        case.exact(0.5, 0.5, 0.5)


@pytest.mark.parametrize("name", sorted(case_library()))
def test_exact_at_zero_is_initial_data(name, rng):
    case = get_case(name)
    x0, x1, y0, y1 = case.bbox
    x = rng.uniform(x0, x1, 50)
    y = rng.uniform(y0, y1, 50)
    assert np.allclose(case.exact(x, y, 0.0), case.u0(x, y), rtol=0, atol=1e-15)
    lo, hi = case.u0_range
    v = case.u0(x, y)
    assert np.all((v >= lo - 1e-15) & (v <= hi + 1e-15))


def test_solid_body_shapes():
    u0 = get_case("solid-body").u0
    assert u0(0.0, -0.5) == 1.0  # cone apex
    assert u0(-0.5, 0.0) == pytest.approx(0.5)  # hump centre
    assert u0(0.2, 0.5) == 1.0 and u0(0.0, 0.5) == 0.0  # cylinder and its slot
    assert u0(0.9, 0.9) == 0.0


def test_domains_and_h():
    lib = case_library()
    assert lib["smooth-rotation"].bbox == (-1.0, 1.0, -1.0, 1.0)
    assert lib["inflow"].n_for_h(0.0125) == 80
    assert lib["solid-body"].n_for_h(0.05) == 40
    assert lib["non-solenoidal"].cfl_target == 0.1 and lib["non-solenoidal"].t_final == 0.5
    with pytest.raises(ValueError):
        get_case("vortex")


def test_audit_flags_galerkin_overshoot():
    case = get_case("solid-body")
    cfg = replace(case.config("galerkin"), t_final=0.1)
    res = run(case, case.mesh(20), cfg)
    assert dmp_audit(res, case.bounds).worst > 0.01


def test_audit_constant_state():
    case = replace(get_case("swirling"), u0=lambda x, y: 0.0 * x + 0.5, u0_range=(0.5, 0.5))
    res = run(case, case.mesh(5), replace(case.config("fct-global"), t_final=0.1))
    rep = dmp_audit(res, (0.5, 0.5))
    assert rep.worst < 1e-15 and rep.ok()


def test_audit_by_hand():
    res = RunResult(final=None, t=1.0, steps=3, rejected=0,
                    u_min=[0.0, -0.2, 0.1], u_max=[1.0, 1.0, 1.05], stage_violation=[0, 0, 0])
    rep = dmp_audit(res, (0.0, 1.0))
    assert rep.worst == pytest.approx(0.2) and rep.worst_step == 1 and rep.steps == 3


def test_convergence_study_small():
    case = get_case("inflow")
    study = convergence_study(case, replace(case.config("fct-global"), t_final=0.1), [4, 8], workers=1)
    assert [r.h for r in study.cr] == [0.25, 0.125]
    assert study.cr[1].rate > 1.0
    with pytest.raises(ValueError):
        convergence_study(case, case.config(), [4])
