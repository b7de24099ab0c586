"""Local stability of steady states.

At a positive steady state the characteristic polynomial of the Jacobian is

    lambda^3 + c1 lambda^2 + c2 lambda + c3,

with c1..c3 composed from the entries m_ij (signs chosen so that every m_ij
is nonnegative at a positive equilibrium) and c4 = c1 c2 - c3.  Stability of
a positive state is read as c3 > 0 and c4 > 0; eigenvalues are always
computed as well and used as the final word.
"""
from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .equilibria import (
    SCAN_INTERVALS,
    RowContext,
    SteadyKind,
    SteadyState,
    _guarded,
    _node_grid,
    break_evens,
    profiles,
)
from .model import BioParams, DomainError, OperatingPoint, jacobian, removal_rates

log = logging.getLogger(__name__)

TOL_MARGIN = 1e-9


class WrongKindError(DomainError):
    """Routh-Hurwitz coefficients requested for the washout state."""


class ConsistencyError(RuntimeError):
    """Closed-form criterion and eigenvalues disagree away from the margin."""


class DegenerateError(RuntimeError):
    """No complex-conjugate pair to follow across a Hopf point."""


class Mechanism(str, Enum):
    ALL_NEGATIVE = "AllEigenvaluesNegative"
    REAL_POSITIVE = "RealPositiveEigenvalue"
    COMPLEX_POSITIVE = "ComplexPairPositive"
    MARGINAL_ZERO = "MarginalZero"
    MARGINAL_IMAGINARY = "MarginalImaginary"

    @property
    def marginal(self) -> bool:
        return self in (Mechanism.MARGINAL_ZERO, Mechanism.MARGINAL_IMAGINARY)


@dataclass(frozen=True)
class RouthHurwitz:
    c1: float
    c2: float
    c3: float
    c4: float
    m_entries: dict[str, float] = field(repr=False)

    @property
    def stable(self) -> bool:
        return self.c3 > 0 and self.c4 > 0


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    mechanism: Mechanism
    eigenvalues: tuple[complex, complex, complex]
    rh: RouthHurwitz | None = None
    rh_agrees: bool | None = None

    @property
    def max_real(self) -> float:
        return max(z.real for z in self.eigenvalues)

    @property
    def letter(self) -> str:
        return "S" if self.stable else "U"


# --- Routh-Hurwitz -----------------------------------------------------------

def rh_coefficients(s, u, v, d: float, p: BioParams) -> dict[str, np.ndarray]:
    """Vectorised m-entries and c1..c4 at (S, u, v)."""
    s, u, v = (np.asarray(x, dtype=float) for x in (s, u, v))
    du, dv = removal_rates(d, p)
    fs, gs = p.f.value(s), p.g.value(s)
    fp, gp = p.f.deriv(s), p.g.deriv(s)
    phi, psi = fs - du, gs - dv
    a, b = p.a, p.b
    m11 = d + fp * u / p.y_u + gp * v / p.y_v
    m12 = fs / p.y_u
    m13 = gs / p.y_v
    m21 = fp * u
    m22 = a * (2 * u + v) - phi
    a23 = b - a * u
    m31 = gp * v
    m32 = a * (2 * u + v)
    m33 = b - a * u - psi
    c1 = m11 + m22 + m33
    c2 = m12 * m21 + m13 * m31 - m32 * a23 + m11 * m22 + m11 * m33 + m22 * m33
    c3 = (m11 * (m22 * m33 - m32 * a23) + m21 * (m12 * m33 + m32 * m13)
          + m31 * (m12 * a23 + m13 * m22))
    c1c2 = c1 * c2
    return dict(m11=m11, m12=m12, m13=m13, m21=m21, m22=m22, a23=a23, m31=m31, m32=m32,
                m33=m33, c1=c1, c2=c2, c3=c3, c4=c1c2 - c3, c1c2=c1c2)


def routh_hurwitz(e1: SteadyState, op: OperatingPoint, p: BioParams) -> RouthHurwitz:
    if not e1.kind.positive:
        raise WrongKindError(f"Routh-Hurwitz test applies to positive states, got {e1.kind.value}")
    s, u, v = e1.state
    c = rh_coefficients(s, u, v, op.d, p)
    m = {k: float(c[k]) for k in ("m11", "m12", "m13", "m21", "m22", "a23", "m31", "m32", "m33")}
    if c["c1"] <= 0:
        log.warning("c1 = %.3g <= 0 at S*=%.6g: two-condition test may disagree", c["c1"], s)
    return RouthHurwitz(float(c["c1"]), float(c["c2"]), float(c["c3"]), float(c["c4"]), m)


def c4_profile(s, d: float, p: BioParams, scaled: bool = False) -> np.ndarray:
    """c4 at the positive equilibrium with substrate S (u = U(S), v = V(S)).

    ``scaled`` divides by max(|c1 c2|, |c3|), which keeps the sign test
    meaningful when the two terms nearly cancel (tiny D).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        pr = profiles(s, d, p)
        c = rh_coefficients(s, pr["u"], pr["v"], d, p)
        if scaled:
            return c["c4"] / np.maximum(np.abs(c["c1c2"]), np.abs(c["c3"]))
        return c["c4"]


def stable_capable_grid(ctx: RowContext) -> np.ndarray:
    """Grid over the part of I where c3 > 0 (the branch that may be stable)."""
    if ctx.interval is None or ctx.p.a == 0:
        return np.empty(0)
    lo, hi = ctx.interval
    if ctx.fold is not None:
        hi = min(hi, ctx.fold.s_lp)
    grid = _guarded(_node_grid(lo, hi, SCAN_INTERVALS), ctx.d, ctx.p)
    # dense near both ends: U or V blow up at one, and at small D the upper
    # Hopf root crowds the end of the branch
    if grid.size and np.isfinite(hi):
        offs = (hi - lo) * np.logspace(-12, -3, 120)
        grid = np.union1d(grid, _guarded(np.concatenate((lo + offs, hi - offs)), ctx.d, ctx.p))
    with np.errstate(divide="ignore", invalid="ignore"):
        pr = profiles(grid, ctx.d, ctx.p)
        c3 = pr["phi"] * (ctx.p.b - pr["psi"]) * (ctx.d + pr["hp"])
    return grid[(c3 > 0) & (pr["u"] > 0) & (pr["v"] > 0)]


def hopf_roots(d: float, p: BioParams, ctx: RowContext | None = None) -> list[float]:
    """Roots S_H of c4(S) = 0 on the stable-capable branch, ascending."""
    ctx = ctx or RowContext(d, p)
    grid = stable_capable_grid(ctx)
    if grid.size < 2:
        return []
    c4 = c4_profile(grid, d, p, scaled=True)
    ok = np.isfinite(c4)
    grid, c4 = grid[ok], c4[ok]
    idx = np.flatnonzero(np.sign(c4[:-1]) * np.sign(c4[1:]) < 0)

    def fn(x):
        return float(c4_profile(x, d, p, scaled=True))

    return [brentq(fn, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15) for i in idx]


def hopf_s_in(s_h: float, d: float, p: BioParams) -> float:
    """Inflow concentration whose positive equilibrium has substrate s_h."""
    return float(profiles(s_h, d, p)["h"]) / d + s_h


# --- eigenvalues ---------------------------------------------------------------

def _cubic_roots(c1: float, c2: float, c3: float) -> list[complex]:
    """Roots of x^3 + c1 x^2 + c2 x + c3 via the depressed cubic."""
    shift = c1 / 3.0
    pp = c2 - c1 * c1 / 3.0
    qq = 2.0 * c1**3 / 27.0 - c1 * c2 / 3.0 + c3
    disc = (qq / 2.0) ** 2 + (pp / 3.0) ** 3
    scale = max(1.0, abs(c1), math.sqrt(abs(c2)), abs(c3) ** (1.0 / 3.0))
    if abs(pp) <= 1e-14 * scale**2 and abs(qq) <= 1e-14 * scale**3:
        ts = [0.0, 0.0, 0.0]  # (numerically) triple root
    elif disc <= 0.0 and pp < 0.0:
        # three real roots: trigonometric form
        r = 2.0 * math.sqrt(-pp / 3.0)
        arg = 3.0 * qq / (pp * r)
        theta = math.acos(max(-1.0, min(1.0, arg)))
        ts = [r * math.cos((theta - 2.0 * math.pi * k) / 3.0) for k in range(3)]
    else:
        sq = math.sqrt(max(disc, 0.0))
        # pick the sign that avoids cancellation
        w = -qq / 2.0 - sq if qq > 0 else -qq / 2.0 + sq
        A = math.copysign(abs(w) ** (1.0 / 3.0), w)
        B = -pp / (3.0 * A) if A != 0.0 else 0.0
        t1 = A + B
        re = -t1 / 2.0
        im = math.sqrt(3.0) / 2.0 * (A - B)
        ts = [t1, complex(re, im), complex(re, -im)]
    return [complex(t) - shift for t in ts]


def _newton(z: complex, c1: float, c2: float, c3: float) -> complex:
    pz = ((z + c1) * z + c2) * z + c3
    dz = (3 * z + 2 * c1) * z + c2
    if dz != 0:
        step = pz / dz
        znew = z - step
        pn = ((znew + c1) * znew + c2) * znew + c3
        if abs(pn) <= abs(pz):
            return znew
    return z


def eigenvalues(j) -> tuple[complex, complex, complex]:
    """Eigenvalues of a real 3x3 matrix from its characteristic cubic.

    Closed-form solve plus one Newton polish per root, sorted by real part.
    """
    j = np.asarray(j, dtype=float)
    if j.shape != (3, 3):
        raise DomainError(f"expected a 3x3 matrix, got shape {j.shape}")
    if not np.all(np.isfinite(j)):
        raise DomainError("matrix has non-finite entries")
    tr = j[0, 0] + j[1, 1] + j[2, 2]
    minors = (j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0] + j[0, 0] * j[2, 2] - j[0, 2] * j[2, 0]
              + j[1, 1] * j[2, 2] - j[1, 2] * j[2, 1])
    det = float(np.linalg.det(j))
    c1, c2, c3 = -tr, minors, -det
    roots = [_newton(z, c1, c2, c3) for z in _cubic_roots(c1, c2, c3)]
    # keep conjugate pairs exact
    out = []
    for z in roots:
        if abs(z.imag) <= 1e-14 * max(1.0, abs(z)):
            z = complex(z.real, 0.0)
        out.append(z)
    if sum(1 for z in out if z.imag != 0) == 2:
        cz = [z for z in out if z.imag != 0]
        re, im = 0.5 * (cz[0].real + cz[1].real), abs(cz[0].imag)
        out = [z for z in out if z.imag == 0] + [complex(re, im), complex(re, -im)]
    out.sort(key=lambda z: (z.real, -z.imag))
    return tuple(out)


# --- classification -----------------------------------------------------------

def _mechanism(eigs) -> tuple[bool, Mechanism]:
    lead = max(eigs, key=lambda z: z.real)
    if abs(lead.real) <= TOL_MARGIN:
        return False, (Mechanism.MARGINAL_IMAGINARY if abs(lead.imag) > TOL_MARGIN
                       else Mechanism.MARGINAL_ZERO)
    if lead.real < 0:
        return True, Mechanism.ALL_NEGATIVE
    if abs(lead.imag) > 0:
        return False, Mechanism.COMPLEX_POSITIVE
    return False, Mechanism.REAL_POSITIVE


def washout_stable(op: OperatingPoint, p: BioParams) -> bool:
    """Closed-form criterion S_in < min(lambda_u, lambda_b)."""
    be = break_evens(op.d, p)
    bp = math.inf if be.lambda_bp is None else be.lambda_bp
    return op.s_in < bp


def classify(ss: SteadyState, op: OperatingPoint, p: BioParams) -> StabilityVerdict:
    eigs = eigenvalues(jacobian(ss.state, op, p))
    stable, mech = _mechanism(eigs)
    if ss.kind == SteadyKind.WASHOUT:
        if not mech.marginal and stable != washout_stable(op, p):
            raise ConsistencyError(
                f"washout at {op}: eigenvalues say stable={stable}, break-even criterion disagrees")
        return StabilityVerdict(stable, mech, eigs)
    if not ss.kind.positive:
        return StabilityVerdict(stable, mech, eigs)
    rh = routh_hurwitz(ss, op, p)
    agrees = None if mech.marginal else (rh.stable == stable)
    if agrees is False:
        log.warning("Routh-Hurwitz and eigenvalues disagree at %s, S*=%.10g", op, ss.s_star)
    return StabilityVerdict(stable, mech, eigs, rh, agrees)


# --- Hopf transversality -------------------------------------------------------

def _branch1(op: OperatingPoint, p: BioParams) -> SteadyState:
    cands = [e for e in RowContext(op.d, p).steady_states(op.s_in) if e.kind == SteadyKind.BRANCH1]
    if not cands:
        raise DegenerateError(f"no stable-capable positive state at {op}")
    if len(cands) == 1:
        return cands[0]
    return min(cands, key=lambda e: abs(float(c4_profile(e.s_star, op.d, p, scaled=True))))


def pair_real_part(ss: SteadyState, op: OperatingPoint, p: BioParams) -> float:
    """Real part of the complex pair, from c4 = -2 alpha ((alpha + r)^2 + beta^2).

    Computing alpha through c4 keeps its relative accuracy when the pair sits
    near the imaginary axis and the eigenvalues differ wildly in magnitude.
    """
    eigs = eigenvalues(jacobian(ss.state, op, p))
    cplx = [z for z in eigs if z.imag > 0]
    if not cplx:
        raise DegenerateError(f"three real eigenvalues at {op}: {eigs}")
    z = cplx[0]
    r = next(w for w in eigs if w.imag == 0).real
    rh = routh_hurwitz(ss, op, p)
    return -rh.c4 / (2.0 * ((z.real + r) ** 2 + z.imag**2))


def hopf_transversality(d: float, s_in_star: float, p: BioParams) -> float:
    """d Re(lambda_pair) / d S_in at a Hopf point, central FD + one Richardson step."""
    op0 = OperatingPoint(s_in_star, d)
    re0 = pair_real_part(_branch1(op0, p), op0, p)
    eigs0 = eigenvalues(jacobian(_branch1(op0, p).state, op0, p))
    scale = max(abs(z) for z in eigs0)
    if abs(re0) > max(1e-7, 1e-3 * scale):
        raise DegenerateError(f"S_in={s_in_star} is not a Hopf point (Re = {re0:.3g})")

    def re_at(s_in):
        op = OperatingPoint(s_in, d)
        return pair_real_part(_branch1(op, p), op, p)

    h = 1e-4 * max(1.0, s_in_star)
    d1 = (re_at(s_in_star + h) - re_at(s_in_star - h)) / (2 * h)
    d2 = (re_at(s_in_star + h / 2) - re_at(s_in_star - h / 2)) / h
    slope = (4 * d2 - d1) / 3
    if slope == 0:
        raise DegenerateError("zero crossing speed")
    return slope


__all__ = [
    "TOL_MARGIN", "Mechanism", "RouthHurwitz", "StabilityVerdict", "WrongKindError",
    "ConsistencyError", "DegenerateError", "rh_coefficients", "routh_hurwitz", "c4_profile",
    "stable_capable_grid", "hopf_roots", "hopf_s_in", "eigenvalues", "classify",
    "washout_stable", "pair_real_part", "hopf_transversality",
]
