"""Compiled row loops for the per-stage limiter work.

These mirror the vectorised reference code in ``limiting`` and are used by
the time integrator, where the same formulas run tens of thousands of times.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def row_extrema(indptr, indices, u):
    n = len(indptr) - 1
    lo = np.empty(n)
    hi = np.empty(n)
    for i in range(n):
        a = np.inf
        b = -np.inf
        for k in range(indptr[i], indptr[i + 1]):
            x = u[indices[k]]
            if x < a:
                a = x
            if x > b:
                b = x
        lo[i] = a
        hi[i] = b
    return lo, hi


@njit(cache=True)
def fct_update(indptr, indices, vdata, u_n, u_l, umin, umax, m, dt, al):
    """Limited update ``U_L + dt/m (sum_j l_ij t_ij + al)`` with Zalesak-type factors."""
    n = len(indptr) - 1
    rp = np.empty(n)
    rm = np.empty(n)
    tv = np.empty(len(indices))
    for i in range(n):
        pp = 0.0
        pm = 0.0
        ui = u_n[i]
        for k in range(indptr[i], indptr[i + 1]):
            # the diagonal term is zero since u_n[i] - u_n[i] = 0
            t = vdata[k] * (ui - u_n[indices[k]])
            tv[k] = t
            # branch-free sums: flux signs are close to random
            pp += max(t, 0.0)
            pm += min(t, 0.0)
        c = m[i] / dt
        qp = max(c * (umax[i] - u_l[i]) - al[i], 0.0)
        qm = min(c * (umin[i] - u_l[i]) - al[i], 0.0)
        rp[i] = min(1.0, qp / pp) if pp != 0.0 else 1.0
        rm[i] = min(1.0, qm / pm) if pm != 0.0 else 1.0
    out = np.empty(n)
    for i in range(n):
        f = 0.0
        rpi = rp[i]
        rmi = rm[i]
        for k in range(indptr[i], indptr[i + 1]):
            t = tv[k]
            j = indices[k]
            a = min(rpi, rm[j])
            b = min(rmi, rp[j])
            f += (a if t >= 0.0 else b) * t
        out[i] = u_l[i] + dt / m[i] * (f + al[i])
    return out


@njit(cache=True)
def greedy_viscosity(indptr, indices, diag, sdata, vdata, u, m, dt):
    """Off-diagonal-scaled greedy viscosity data with zero row sums."""
    n = len(indptr) - 1
    psi = np.empty(n)
    for i in range(n):
        ui = u[i]
        lo = ui
        hi = ui
        gp = 0.0
        gm = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            x = u[indices[k]]
            if x < lo:
                lo = x
            if x > hi:
                hi = x
            a = abs(vdata[k])
            if ui < x:
                gp += a
            elif ui > x:
                gm += a
        c = dt / m[i]
        gp *= c
        gm *= c
        gamma = c * (sdata[diag[i]] - vdata[diag[i]])
        if hi - lo != 0.0:
            theta = (ui - lo) / (hi - lo)
        else:
            theta = 0.5
        theta = min(max(theta, 0.0), 1.0)
        d1 = theta * gm
        d2 = (1.0 - theta) * gp
        r = np.inf
        if d1 != 0.0:
            r = (1.0 - theta) / d1
        if d2 != 0.0:
            r = min(r, theta / d2)
        slack = 1.0 - gamma
        if slack <= 0.0:
            p = 1.0
        else:
            p = 1.0 - slack * r
        psi[i] = min(max(p, 0.0), 1.0)
    out = np.empty_like(vdata)
    for i in range(n):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j == i:
                continue
            v = max(psi[i], psi[j]) * vdata[k]
            out[k] = v
            s += v
        out[diag[i]] = -s
    return out
