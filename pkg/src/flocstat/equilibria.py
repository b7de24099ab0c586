"""Steady states of the flocculation model.

A positive steady state has substrate S* solving the balance equation

    D (S_in - S) = H(S),   H(S) = f(S) U(S) / y_u + g(S) V(S) / y_v,

with biomass profiles

    U(S) = phi (psi - b) / (a (psi - phi)),   V(S) = -phi U / psi,
    phi = f(S) - D_u,  psi = g(S) - D_v.

Equivalently ``S_in = S + H(S)/D``, so every branch is a graph over S.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from . import kernels
from ._accel import NUMBA_ENABLED
from .model import BioParams, DomainError, OperatingPoint, State, removal_rates

log = logging.getLogger(__name__)

SCAN_INTERVALS = 2000
POLE_GUARD = 1e-9
ROOT_TOL = 1e-12


class FlocculationDegenerate(DomainError):
    """a = 0: U and V are undefined, use the classical chemostat path."""


class PoleError(DomainError):
    """psi = phi or psi = 0: U or V has a pole."""


@dataclass(frozen=True)
class AuxiliaryEval:
    s: float
    phi: float
    psi: float
    u_profile: float
    v_profile: float
    h: float
    h_prime: float


@dataclass(frozen=True)
class BreakEvenSet:
    lambda_u: float | None
    lambda_v: float | None
    lambda_b: float | None
    lambda_bp: float | None
    d_bar_u: float
    d_bar_v: float
    d_bar_b: float


class SteadyKind(str, Enum):
    WASHOUT = "washout"
    BRANCH1 = "positive-1"  # c3 > 0 side: the only branch that can be stable
    BRANCH2 = "positive-2"  # c3 < 0: always a saddle
    PLANKTONIC = "planktonic-only"  # a = 0 fallback
    ATTACHED = "attached-only"  # a = 0 fallback

    @property
    def positive(self) -> bool:
        return self in (SteadyKind.BRANCH1, SteadyKind.BRANCH2)


@dataclass(frozen=True)
class SteadyState:
    kind: SteadyKind
    state: State
    s_star: float


def profiles(s, d: float, p: BioParams) -> dict[str, np.ndarray]:
    """Vectorised phi, psi, U, V, H, H' and their pieces (no pole checks)."""
    s = np.asarray(s, dtype=float)
    du, dv = removal_rates(d, p)
    a, b = p.a, p.b
    fs, gs = p.f.value(s), p.g.value(s)
    fp, gp = p.f.deriv(s), p.g.deriv(s)
    phi, psi = fs - du, gs - dv
    num = phi * (psi - b)
    den = a * (psi - phi)
    uu = num / den
    dnum = fp * (psi - b) + phi * gp
    dden = a * (gp - fp)
    duu = (dnum * den - num * dden) / den**2
    vv = -phi * uu / psi
    dvv = -((fp * uu + phi * duu) * psi - phi * uu * gp) / psi**2
    h = fs * uu / p.y_u + gs * vv / p.y_v
    hp = (fp * uu + fs * duu) / p.y_u + (gp * vv + gs * dvv) / p.y_v
    return dict(f=fs, g=gs, fp=fp, gp=gp, phi=phi, psi=psi, u=uu, v=vv, du=duu, dv=dvv, h=h, hp=hp)


def auxiliary(s: float, d: float, p: BioParams) -> AuxiliaryEval:
    if s <= 0:
        raise DomainError("auxiliary functions need s > 0")
    if p.a == 0:
        raise FlocculationDegenerate("a = 0: U and V are undefined")
    with np.errstate(divide="ignore", invalid="ignore"):
        pr = profiles(s, d, p)
    phi, psi = float(pr["phi"]), float(pr["psi"])
    if psi == phi or psi == 0:
        raise PoleError(f"pole at s={s}: phi={phi}, psi={psi}")
    return AuxiliaryEval(s=float(s), phi=phi, psi=psi, u_profile=float(pr["u"]),
                         v_profile=float(pr["v"]), h=float(pr["h"]), h_prime=float(pr["hp"]))


def _opt(x: float) -> float | None:
    return None if math.isinf(x) else x


def _bound(sup: float, mortality: float, frac: float) -> float:
    if frac == 0:
        return math.inf if sup > mortality else 0.0
    return (sup - mortality) / frac


def break_evens(d: float, p: BioParams) -> BreakEvenSet:
    if d < 0:
        raise DomainError("dilution rate must be >= 0")
    du, dv = removal_rates(d, p)
    lu = p.f.inverse(du)
    lv = p.g.inverse(dv)
    lb = p.g.inverse(dv + p.b)
    lbp = min(lu, lb)
    return BreakEvenSet(
        lambda_u=_opt(lu), lambda_v=_opt(lv), lambda_b=_opt(lb), lambda_bp=_opt(lbp),
        d_bar_u=_bound(p.f.sup, p.m_u, p.alpha),
        d_bar_v=_bound(p.g.sup, p.m_v, p.beta),
        d_bar_b=_bound(p.g.sup, p.m_v + p.b, p.beta),
    )


def _inf(x: float | None) -> float:
    return math.inf if x is None else x


def existence_interval(d: float, p: BioParams) -> tuple[float, float] | None:
    """Open interval of S where positive steady states can live, or None.

    An absent break-even concentration counts as +inf, so the upper end may
    be infinite; the balance equation then bounds S* by S_in.
    """
    be = break_evens(d, p)
    lu, lv, lb = _inf(be.lambda_u), _inf(be.lambda_v), _inf(be.lambda_b)
    if lu < lv:
        lo, hi = lu, lv
    else:
        lo, hi = lv, min(lu, lb)
    if math.isinf(lo) or not lo < hi:
        return None
    return lo, hi


def _node_grid(lo: float, hi: float, n: int = SCAN_INTERVALS) -> np.ndarray:
    if math.isinf(hi):
        return lo + np.concatenate(([0.0], np.logspace(-10, 4, n)))
    return np.linspace(lo, hi, n + 1)


def _guarded(grid: np.ndarray, d: float, p: BioParams) -> np.ndarray:
    du, dv = removal_rates(d, p)
    phi = p.f.value(grid) - du
    psi = p.g.value(grid) - dv
    keep = (np.abs(psi) >= POLE_GUARD) & (np.abs(psi - phi) >= POLE_GUARD) & (grid > 0)
    return grid[keep]


@dataclass(frozen=True)
class FoldPoint:
    s_lp: float
    lambda_lp: float
    n_roots: int = 1


def _fold(d: float, p: BioParams, be: BreakEvenSet | None = None) -> FoldPoint | None:
    if p.a == 0 or d <= 0:
        return None
    be = be or break_evens(d, p)
    if be.lambda_v is None or not be.lambda_v < _inf(be.lambda_bp):
        return None
    lo, hi = be.lambda_v, _inf(be.lambda_bp)
    grid = _guarded(_node_grid(lo, hi), d, p)
    if grid.size < 2:
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        g = profiles(grid, d, p)["hp"] + d
    ok = np.isfinite(g)
    grid, g = grid[ok], g[ok]
    idx = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    if idx.size == 0:
        return None

    def fn(s):
        return float(profiles(s, d, p)["hp"]) + d

    s_lp = brentq(fn, grid[idx[0]], grid[idx[0] + 1], xtol=1e-15, rtol=1e-15)
    if idx.size > 1:
        warnings.warn(f"H'(S) = -D has {idx.size} roots at D={d}; using the smallest", RuntimeWarning)
    h = float(profiles(s_lp, d, p)["h"])
    return FoldPoint(s_lp=s_lp, lambda_lp=h / d + s_lp, n_roots=int(idx.size))


def fold_locus(d: float, p: BioParams) -> tuple[float, float] | None:
    """(S_LP, lambda_LP): the fold of the positive branch, None below D-bar."""
    fp = _fold(d, p)
    return None if fp is None else (fp.s_lp, fp.lambda_lp)


def critical_dilution_dbar(p: BioParams) -> float | None:
    """D-bar: where the fold curve detaches from the branch-point curve."""
    if p.a == 0:
        return None
    be0 = break_evens(0.0, p)
    d_hi = max(be0.d_bar_u, be0.d_bar_b)
    if not math.isfinite(d_hi) or d_hi <= 0:
        return None

    def fn(d):
        be = break_evens(d, p)
        if be.lambda_v is None or be.lambda_bp is None or not be.lambda_v < be.lambda_bp:
            return math.nan
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(profiles(be.lambda_bp, d, p)["hp"]) + d

    ds = np.linspace(0.0, d_hi, SCAN_INTERVALS + 1)[1:-1]
    vals = np.array([fn(x) for x in ds])
    for i in range(ds.size - 1):
        if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) and vals[i] * vals[i + 1] < 0:
            return brentq(fn, ds[i], ds[i + 1], xtol=1e-15, rtol=1e-15)
    return None


class RowContext:
    """Everything about the balance equation that depends on D only.

    Diagram code builds one per D-row and reuses it across S_in values.
    """

    def __init__(self, d: float, p: BioParams, n: int = SCAN_INTERVALS):
        self.d = d
        self.p = p
        self.breaks = break_evens(d, p)
        self.interval = existence_interval(d, p) if p.a > 0 else None
        self.fold = _fold(d, p, self.breaks) if self.interval else None
        self._n = n
        self._base = None
        if self.interval is not None:
            lo, hi = self.interval
            grid = _node_grid(lo, hi, n)
            if math.isfinite(hi):
                # geometric refinement at both ends: U or V blows up at one
                # and roots crowd the other when the interval is long
                offs = (hi - lo) * np.logspace(-12, -1, 200)
                grid = np.union1d(grid, np.concatenate((lo + offs, hi - offs)))
            if self.fold is not None:
                grid = np.union1d(grid, [self.fold.s_lp])
            self._base = _guarded(grid, d, p)
        self._fast = NUMBA_ENABLED and p.is_monod
        self._P = p.as_array()

    def residual(self, s, s_in: float):
        pr = profiles(s, self.d, self.p)
        return self.d * (s_in - s) - pr["h"]

    def positive_roots(self, s_in: float) -> list[float]:
        if self._base is None or self.d <= 0:
            return []
        grid = self._base[self._base < s_in]
        if grid.size and grid[-1] < s_in < self.interval[1]:
            # S* < S_in always; close the scan at S_in itself, where the
            # residual is -H(S_in)
            grid = np.append(grid, _guarded(np.array([float(s_in)]), self.d, self.p))
        if grid.size < 2:
            return []
        if self._fast:
            roots, _ = kernels.scan_roots(self._P, float(s_in), float(self.d), grid, ROOT_TOL)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                roots, _ = kernels.scan_roots_numpy(lambda z: self.residual(z, s_in), grid, ROOT_TOL)
        return [float(r) for r in roots]

    def steady_states(self, s_in: float) -> list[SteadyState]:
        p, d = self.p, self.d
        out = [SteadyState(SteadyKind.WASHOUT, State(float(s_in), 0.0, 0.0), float(s_in))]
        if p.a == 0:
            return out + _classical_states(s_in, d, p, self.breaks)
        for s in self.positive_roots(s_in):
            pr = profiles(s, d, p)
            u, v = float(pr["u"]), float(pr["v"])
            if not (u > 0 and v > 0):
                continue
            c3_sign = pr["phi"] * (p.b - pr["psi"]) * (d + pr["hp"])
            kind = SteadyKind.BRANCH1 if c3_sign > 0 else SteadyKind.BRANCH2
            out.append(SteadyState(kind, State(s, u, v), s))
        return out


def _classical_states(s_in: float, d: float, p: BioParams, be: BreakEvenSet) -> list[SteadyState]:
    """a = 0: planktonic and attached populations decouple apart from detachment."""
    out = []
    du, dv = removal_rates(d, p)
    lu = be.lambda_u
    if lu is not None and lu < s_in and lu > 0:
        u = d * (s_in - lu) * p.y_u / p.f.value(lu)
        out.append(SteadyState(SteadyKind.PLANKTONIC, State(lu, u, 0.0), lu))
    lb = be.lambda_b
    if lb is not None and lb < s_in and lb > 0:
        fb, gb = p.f.value(lb), p.g.value(lb)
        phi = fb - du
        if p.b == 0:
            v = d * (s_in - lb) * p.y_v / gb
            out.append(SteadyState(SteadyKind.ATTACHED, State(lb, 0.0, v), lb))
        elif phi < 0:
            # u = -b v / phi; substrate balance fixes v
            ratio = -p.b / phi
            v = d * (s_in - lb) / (fb * ratio / p.y_u + gb / p.y_v)
            out.append(SteadyState(SteadyKind.ATTACHED, State(lb, ratio * v, v), lb))
    return out


def find_steady_states(op: OperatingPoint, p: BioParams) -> list[SteadyState]:
    """Washout first, then positive states sorted by S*."""
    return RowContext(op.d, p).steady_states(op.s_in)
