"""Hot loops: the model right-hand side, an embedded Dormand-Prince 5(4)
integrator with dense output, and the balance-equation root scan.

All kernels take the flat parameter vector of :meth:`BioParams.as_array`
(Monod kinetics).  They are compiled with numba unless
``FLOCSTAT_DISABLE_NUMBA`` is set; ``scan_roots_numpy`` is the vectorised
counterpart used for the fallback path and for non-Monod kinetics.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

# integrate() status codes
OK = 0
STEP_UNDERFLOW = 1
DIVERGED = 2
MAX_STEPS = 3

NEG_CLAMP = 1e-13  # stage values in (-NEG_CLAMP, 0) are evaluated as 0
NEG_FLOOR = 1e-12  # accepted states never go below -NEG_FLOOR


@njit
def rhs(x, P, s_in, d, scale, out):
    s = x[0]
    u = x[1]
    v = x[2]
    if -NEG_CLAMP < s < 0.0:
        s = 0.0
    if -NEG_CLAMP < u < 0.0:
        u = 0.0
    if -NEG_CLAMP < v < 0.0:
        v = 0.0
    fs = P[0] * s / (P[1] + s)
    gs = P[2] * s / (P[3] + s)
    du = P[6] * d + P[8]
    dv = P[7] * d + P[9]
    floc = P[4] * (u + v) * u - P[5] * v
    out[0] = scale * (d * (s_in - s) - fs * u / P[10] - gs * v / P[11])
    out[1] = scale * ((fs - du) * u - floc)
    out[2] = scale * ((gs - dv) * v + floc)


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# error = y5 - y4
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)
# Shampine's quartic dense-output coefficients, rows = stages
DENSE = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@njit
def dopri5(P, s_in, d, scale, y0, t_end, rtol, atol, t_out, upper, max_steps):
    """Integrate from t=0 to ``t_end``, writing dense output at ``t_out``.

    Returns ``(y_out, y_end, n_accepted, n_rejected, status, t_reached)``.
    ``upper`` is the divergence box bound on every component.
    """
    n_out = t_out.shape[0]
    y_out = np.empty((n_out, 3))
    K = np.empty((7, 3))
    y = y0.copy()
    ytmp = np.empty(3)
    ynew = np.empty(3)
    err = np.empty(3)
    dense = DENSE
    t = 0.0
    k_out = 0
    while k_out < n_out and t_out[k_out] <= 0.0:
        y_out[k_out] = y
        k_out += 1
    rhs(y, P, s_in, d, scale, K[0])
    # initial step (Hairer's heuristic, simplified)
    d0 = 0.0
    d1 = 0.0
    for i in range(3):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (K[0, i] / sc) ** 2
    d0 = math.sqrt(d0 / 3)
    d1 = math.sqrt(d1 / 3)
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, t_end)
    h_min = 1e-14 * t_end
    n_acc = 0
    n_rej = 0
    err_prev = 1e-4
    status = 0
    while t < t_end:
        if n_acc + n_rej >= max_steps:
            status = 3
            break
        if h < h_min:
            status = 1
            break
        if t + h > t_end:
            h = t_end - t
        for i in range(3):
            ytmp[i] = y[i] + h * _A21 * K[0, i]
        rhs(ytmp, P, s_in, d, scale, K[1])
        for i in range(3):
            ytmp[i] = y[i] + h * (_A31 * K[0, i] + _A32 * K[1, i])
        rhs(ytmp, P, s_in, d, scale, K[2])
        for i in range(3):
            ytmp[i] = y[i] + h * (_A41 * K[0, i] + _A42 * K[1, i] + _A43 * K[2, i])
        rhs(ytmp, P, s_in, d, scale, K[3])
        for i in range(3):
            ytmp[i] = y[i] + h * (_A51 * K[0, i] + _A52 * K[1, i] + _A53 * K[2, i] + _A54 * K[3, i])
        rhs(ytmp, P, s_in, d, scale, K[4])
        for i in range(3):
            ytmp[i] = y[i] + h * (_A61 * K[0, i] + _A62 * K[1, i] + _A63 * K[2, i]
                                  + _A64 * K[3, i] + _A65 * K[4, i])
        rhs(ytmp, P, s_in, d, scale, K[5])
        for i in range(3):
            ynew[i] = y[i] + h * (_B1 * K[0, i] + _B3 * K[2, i] + _B4 * K[3, i]
                                  + _B5 * K[4, i] + _B6 * K[5, i])
        rhs(ynew, P, s_in, d, scale, K[6])
        en = 0.0
        negative = False
        for i in range(3):
            err[i] = h * (_E1 * K[0, i] + _E3 * K[2, i] + _E4 * K[3, i]
                          + _E5 * K[4, i] + _E6 * K[5, i] + _E7 * K[6, i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            en += (err[i] / sc) ** 2
            if ynew[i] < -NEG_FLOOR:
                negative = True
        en = math.sqrt(en / 3)
        if en <= 1.0 and not negative:
            # dense output on (t, t + h]
            t_new = t + h
            while k_out < n_out and t_out[k_out] <= t_new:
                th = (t_out[k_out] - t) / h
                th2 = th * th
                th3 = th2 * th
                th4 = th3 * th
                for i in range(3):
                    acc = 0.0
                    for s in range(7):
                        acc += K[s, i] * (dense[s, 0] * th + dense[s, 1] * th2
                                          + dense[s, 2] * th3 + dense[s, 3] * th4)
                    val = y[i] + h * acc
                    y_out[k_out, i] = val if val > 0.0 or val < -NEG_FLOOR else max(val, 0.0)
                k_out += 1
            t = t_new
            for i in range(3):
                y[i] = ynew[i] if ynew[i] > 0.0 else 0.0
                K[0, i] = K[6, i]
            if ynew[0] < 0.0 or ynew[1] < 0.0 or ynew[2] < 0.0:
                rhs(y, P, s_in, d, scale, K[0])
            n_acc += 1
            diverged = False
            for i in range(3):
                if y[i] > upper or not math.isfinite(y[i]):
                    diverged = True
            if diverged:
                status = 2
                break
            # PI controller
            en_c = max(en, 1e-10)
            fac = 0.9 * en_c ** (-0.7 / 5) * err_prev ** (0.4 / 5)
            fac = min(5.0, max(0.2, fac))
            h = h * fac
            err_prev = en_c
        else:
            n_rej += 1
            if negative and en <= 1.0:
                h = 0.5 * h
            else:
                h = h * max(0.2, 0.9 * en ** (-0.2))
    while k_out < n_out:
        y_out[k_out] = np.nan
        k_out += 1
    return y_out, y, n_acc, n_rej, status, t


@njit
def balance_residual(s, P, s_in, d):
    """D (S_in - S) - H(S) for Monod kinetics (flocculation case a > 0)."""
    fs = P[0] * s / (P[1] + s)
    gs = P[2] * s / (P[3] + s)
    phi = fs - (P[6] * d + P[8])
    psi = gs - (P[7] * d + P[9])
    a = P[4]
    b = P[5]
    uu = phi * (psi - b) / (a * (psi - phi))
    vv = -phi * uu / psi
    return d * (s_in - s) - (fs * uu / P[10] + gs * vv / P[11])


@njit
def _polish(P, s_in, d, lo, hi, rlo, rhi, tol):
    # Illinois regula falsi with bisection fallback
    side = 0
    for it in range(200):
        if hi - lo <= 4e-16 * max(1.0, abs(lo)):
            break
        m = (lo * rhi - hi * rlo) / (rhi - rlo)
        if not (lo < m < hi):
            m = 0.5 * (lo + hi)
        rm = balance_residual(m, P, s_in, d)
        if abs(rm) < tol:
            return m, rm
        if (rm > 0) == (rlo > 0):
            lo, rlo = m, rm
            if side == -1:
                rhi *= 0.5
            side = -1
        else:
            hi, rhi = m, rm
            if side == 1:
                rlo *= 0.5
            side = 1
        if it % 8 == 7:
            mid = 0.5 * (lo + hi)
            rmid = balance_residual(mid, P, s_in, d)
            if (rmid > 0) == (rlo > 0):
                lo, rlo = mid, rmid
            else:
                hi, rhi = mid, rmid
    if abs(rlo) < abs(rhi):
        return lo, rlo
    return hi, rhi


@njit
def scan_roots(P, s_in, d, grid, tol):
    """All sign changes of the balance residual over ``grid``, polished."""
    n = grid.shape[0]
    roots = np.empty(n)
    resid = np.empty(n)
    count = 0
    r_prev = balance_residual(grid[0], P, s_in, d)
    for i in range(1, n):
        r = balance_residual(grid[i], P, s_in, d)
        if r == 0.0:
            roots[count] = grid[i]
            resid[count] = 0.0
            count += 1
        elif r_prev != 0.0 and (r > 0) != (r_prev > 0) and math.isfinite(r) and math.isfinite(r_prev):
            x, rx = _polish(P, s_in, d, grid[i - 1], grid[i], r_prev, r, tol)
            roots[count] = x
            resid[count] = rx
            count += 1
        r_prev = r
    return roots[:count], resid[:count]


def scan_roots_numpy(residual, grid: np.ndarray, tol: float):
    """Vectorised sign-change scan with Brent polishing for any residual callable."""
    from scipy.optimize import brentq

    r = residual(grid)
    roots, res = [], []
    exact = np.flatnonzero(r[1:] == 0.0) + 1
    change = np.flatnonzero(
        (np.sign(r[:-1]) * np.sign(r[1:]) < 0) & np.isfinite(r[:-1]) & np.isfinite(r[1:])
    )
    for i in change:
        x = brentq(lambda z: float(residual(np.array([z]))[0]), grid[i], grid[i + 1],
                   xtol=1e-15, rtol=1e-15, maxiter=200)
        roots.append(x)
        res.append(float(residual(np.array([x]))[0]))
    for i in exact:
        roots.append(grid[i])
        res.append(0.0)
    order = np.argsort(roots)
    return np.asarray(roots)[order], np.asarray(res)[order]


__all__ = [
    "NUMBA_ENABLED", "rhs", "dopri5", "balance_residual", "scan_roots", "scan_roots_numpy",
    "OK", "STEP_UNDERFLOW", "DIVERGED", "MAX_STEPS",
]
