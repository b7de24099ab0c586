"""Operating diagrams in the (S_in, D) plane and one-parameter diagrams in S_in.

Curves (S_in as a function of D):

    GammaU   S_in = lambda_u(D)            BP
    GammaB   S_in = lambda_b(D)            BP
    GammaBP  S_in = min(lambda_u, lambda_b) BP
    GammaLP  S_in = lambda_LP(D)           LP
    GammaH1  S_in = S_H1 + H(S_H1)/D       H   (left of the maximum)
    GammaH2  S_in = S_H2 + H(S_H2)/D       H

Regions I0..I4 are read off two ways: from the curve inequalities (with the
sign of c4 on the stable-capable branch) and from the eigenvalues of every
steady state.  The eigenvalue inventory is authoritative; disagreement is
recorded per cell.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from ._accel import max_workers
from .dynamics import (
    PERIOD_CAP,
    InconclusiveError,
    cycle_predicate,
    homoclinic_locate,
)
from .equilibria import (
    RowContext,
    SteadyKind,
    SteadyState,
    _guarded,
    _node_grid,
    break_evens,
    critical_dilution_dbar,
    profiles,
)
from .model import BioParams, DomainError, OperatingPoint, State
from .stability import c4_profile, classify, hopf_roots, hopf_s_in

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-7


class CurveId(str, Enum):
    GAMMA_U = "GammaU"
    GAMMA_B = "GammaB"
    GAMMA_BP = "GammaBP"
    GAMMA_LP = "GammaLP"
    GAMMA_H1 = "GammaH1"
    GAMMA_H2 = "GammaH2"

    @property
    def bifurcation_type(self) -> str:
        if self in (CurveId.GAMMA_H1, CurveId.GAMMA_H2):
            return "H"
        return "LP" if self == CurveId.GAMMA_LP else "BP"


class Region(str, Enum):
    I0 = "I0"
    I1 = "I1"
    I2 = "I2"
    I3 = "I3"
    I4 = "I4"
    BOUNDARY = "Boundary"


# region colour scheme
REGION_COLORS = {"I0": "#00ffff", "I1": "#ff0000", "I2": "#00c000", "I3": "#0000ff",
                 "I4": "#ffff00", "Boundary": "#808080"}
CURVE_COLORS = {"GammaU": "#ff0000", "GammaB": "#0000ff", "GammaBP": "#000000",
                "GammaLP": "#008000", "GammaH1": "#ff00ff", "GammaH2": "#ff00ff"}


@dataclass(frozen=True)
class DiagramCurve:
    identity: CurveId
    points: np.ndarray  # (n, 2): S_in, D ordered by D
    reason: str = ""

    @property
    def bifurcation_type(self) -> str:
        return self.identity.bifurcation_type


@dataclass(frozen=True)
class RegionLabel:
    tag: Region
    inventory: dict[str, str]
    theoretical: Region | None
    eigen: Region | None
    boundary: bool = False

    @property
    def consistent(self) -> bool:
        return self.theoretical is not None and self.theoretical == self.eigen


@dataclass(frozen=True)
class SpecialPoint:
    kind: str  # Cusp | BogdanovTakens | CurveIntersection
    location: tuple[float, float]
    provenance: tuple[str, ...]
    flag: str = ""


# --- curves ---------------------------------------------------------------------------

def _d_samples(d_range, n, spacing="linear"):
    lo, hi = d_range
    if not lo < hi:
        raise DomainError("d_range must satisfy lo < hi")
    if spacing == "log":
        lo = max(lo, hi * 1e-9)
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def _hopf_pair(d: float, p: BioParams, ctx: RowContext | None = None):
    """(S_H2, S_H1) with S_H2 < S_H1, or None when c4 has fewer than two roots."""
    roots = hopf_roots(d, p, ctx)
    if len(roots) < 2:
        return None
    return roots[0], roots[-1]


def curve(identity, d_range: tuple[float, float], n: int, p: BioParams,
          spacing: str = "linear") -> DiagramCurve:
    ident = CurveId(identity)
    pts = []
    for d in _d_samples(d_range, n, spacing):
        if d <= 0 and ident not in (CurveId.GAMMA_U, CurveId.GAMMA_B, CurveId.GAMMA_BP):
            continue
        be = break_evens(d, p)
        if ident == CurveId.GAMMA_U:
            s = be.lambda_u
        elif ident == CurveId.GAMMA_B:
            s = be.lambda_b
        elif ident == CurveId.GAMMA_BP:
            s = be.lambda_bp
        elif ident == CurveId.GAMMA_LP:
            ctx = RowContext(d, p)
            s = ctx.fold.lambda_lp if ctx.fold else None
        else:
            pair = _hopf_pair(d, p)
            if pair is None:
                s = None
            else:
                s_h = pair[1] if ident == CurveId.GAMMA_H1 else pair[0]
                s = hopf_s_in(s_h, d, p)
        if s is not None and math.isfinite(s):
            pts.append((s, d))
    reason = "" if pts else f"{ident.value} is empty on D in {tuple(d_range)}"
    return DiagramCurve(ident, np.asarray(pts, dtype=float).reshape(-1, 2), reason)


def curve_residual(c: DiagramCurve, p: BioParams) -> np.ndarray:
    """Defining-equation residual at every point of a curve."""
    out = []
    for s_in, d in c.points:
        be = break_evens(d, p)
        if c.identity == CurveId.GAMMA_U:
            out.append(s_in - be.lambda_u)
        elif c.identity == CurveId.GAMMA_B:
            out.append(s_in - be.lambda_b)
        elif c.identity == CurveId.GAMMA_BP:
            out.append(s_in - be.lambda_bp)
        elif c.identity == CurveId.GAMMA_LP:
            out.append(s_in - RowContext(d, p).fold.lambda_lp)
        else:
            e1 = [e for e in RowContext(d, p).steady_states(s_in) if e.kind == SteadyKind.BRANCH1]
            out.append(min(abs(float(c4_profile(e.s_star, d, p, scaled=True))) for e in e1))
    return np.asarray(out)


def hopf_extent(p: BioParams, d_probe: tuple[float, float] = (1e-6, None),
                width: float = 1e-4) -> float:
    """D_H^max: bisection on 'c4(S) = 0 has two roots on the branch'."""
    lo, hi = d_probe
    if hi is None:
        be = break_evens(0.0, p)
        hi = min(x for x in (be.d_bar_u, be.d_bar_v, be.d_bar_b) if x > 0)
        hi = hi * (1 - 1e-9) if math.isfinite(hi) else 10.0
    has_lo = _hopf_pair(lo, p) is not None
    has_hi = _hopf_pair(hi, p) is not None
    if has_lo == has_hi:
        raise InconclusiveError(f"Hopf-root predicate is {has_lo} at both D={lo} and D={hi}")
    while hi - lo >= width:
        mid = 0.5 * (lo + hi)
        if (_hopf_pair(mid, p) is not None) == has_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- region classification ----------------------------------------------------------------

class _Row:
    """Per-D data reused for every S_in in a diagram row."""

    def __init__(self, d: float, p: BioParams):
        self.d, self.p = d, p
        self.ctx = RowContext(d, p)
        be = self.ctx.breaks
        self.bp = math.inf if be.lambda_bp is None else be.lambda_bp
        self.lp = self.ctx.fold.lambda_lp if self.ctx.fold else math.inf
        pair = _hopf_pair(d, p, self.ctx) if p.a > 0 and d > 0 else None
        self.hopf = [hopf_s_in(s, d, p) for s in pair] if pair else []

    def near_curve(self, s_in: float) -> bool:
        return any(abs(s_in - c) < BOUNDARY_TOL for c in [self.bp, self.lp, *self.hopf]
                   if math.isfinite(c))


def theoretical_region(s_in: float, row: _Row, states=None) -> Region | None:
    """Region from the curve inequalities and the sign of c4 at E1^1."""
    p, d = row.p, row.d
    if p.a == 0 or d == 0:
        return Region.I0 if s_in < row.bp else Region.I1
    if s_in > row.bp:
        n = 1
    elif s_in > row.lp:
        n = 2
    else:
        return Region.I0
    states = states if states is not None else row.ctx.steady_states(s_in)
    e1 = [e for e in states if e.kind == SteadyKind.BRANCH1]
    if len(e1) != 1:
        return None
    c4 = float(c4_profile(e1[0].s_star, d, p))
    if n == 1:
        return Region.I1 if c4 > 0 else Region.I3
    return Region.I2 if c4 > 0 else Region.I4


_NAMES = {SteadyKind.WASHOUT: "E0", SteadyKind.BRANCH1: "E1^1", SteadyKind.BRANCH2: "E1^2",
          SteadyKind.PLANKTONIC: "planktonic", SteadyKind.ATTACHED: "attached"}


def eigen_region(inv: dict[str, str], flocculation: bool = True) -> Region | None:
    e0 = inv.get("E0")
    if not flocculation:
        stable = [k for k, v in inv.items() if k != "E0" and v == "S"]
        if e0 == "S" and not stable:
            return Region.I0
        if e0 == "U" and len(stable) == 1:
            return Region.I1
        return None
    e11, e12 = inv.get("E1^1"), inv.get("E1^2")
    if e11 is None and e12 is None:
        return Region.I0 if e0 == "S" else None
    if e12 is None:
        if e0 != "U":
            return None
        return Region.I1 if e11 == "S" else Region.I3
    if e11 is None or e0 != "S" or e12 != "U":
        return None
    return Region.I2 if e11 == "S" else Region.I4


def classify_region(op: OperatingPoint, p: BioParams, row: _Row | None = None) -> RegionLabel:
    row = row or _Row(op.d, p)
    states = row.ctx.steady_states(op.s_in)
    inv, marginal = {}, False
    for e in states:
        v = classify(e, op, p)
        marginal |= v.mechanism.marginal
        inv[_NAMES[e.kind]] = v.letter
    theo = theoretical_region(op.s_in, row, states)
    eig = None if marginal else eigen_region(inv, p.a > 0)
    boundary = marginal or row.near_curve(op.s_in)
    if boundary:
        tag = Region.BOUNDARY
    else:
        tag = eig or theo or Region.BOUNDARY
    if not boundary and theo != eig:
        log.debug("region mismatch at %s: theory %s, eigenvalues %s", op, theo, eig)
    return RegionLabel(tag, inv, theo, eig, boundary)


# --- operating diagram ---------------------------------------------------------------------

@dataclass
class OperatingDiagram:
    params: BioParams
    s_in: np.ndarray  # cell centres
    d: np.ndarray
    labels: np.ndarray  # (ny, nx) of region strings
    theoretical: np.ndarray
    eigen: np.ndarray
    curves: list[DiagramCurve] = field(default_factory=list)
    special: list[SpecialPoint] = field(default_factory=list)
    s_in_range: tuple[float, float] = (0.0, 1.0)
    d_range: tuple[float, float] = (0.0, 1.0)

    @property
    def label_set(self) -> set[str]:
        return {str(x) for x in np.unique(self.labels)} - {Region.BOUNDARY.value}

    @property
    def agreement(self) -> float:
        """Fraction of non-boundary cells where both classifications agree."""
        mask = self.labels != Region.BOUNDARY.value
        if not mask.any():
            return 1.0
        return float(np.mean(self.theoretical[mask] == self.eigen[mask]))

    def area(self, region: str) -> float:
        ds = (self.s_in_range[1] - self.s_in_range[0]) / self.s_in.size
        dd = (self.d_range[1] - self.d_range[0]) / self.d.size
        return float(np.sum(self.labels == region)) * ds * dd


def _row_labels(args):
    d, s_values, p = args
    row = _Row(d, p)
    out = []
    for s in s_values:
        lab = classify_region(OperatingPoint(float(s), float(d)), p, row)
        out.append((lab.tag.value, lab.theoretical.value if lab.theoretical else "",
                    lab.eigen.value if lab.eigen else ""))
    return out


def _map(fn, items, workers):
    workers = max_workers() if workers is None else workers
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def grid_labels(s_in_range, d_range, grid, p: BioParams, workers: int | None = None):
    nx, ny = grid
    if nx < 2 or ny < 2:
        raise DomainError("grid must be at least 2x2")
    (s0, s1), (d0, d1) = s_in_range, d_range
    if not (0 <= s0 < s1 and 0 <= d0 < d1):
        raise DomainError("ranges must be nonnegative with lo < hi")
    xs = s0 + (np.arange(nx) + 0.5) * (s1 - s0) / nx
    ys = d0 + (np.arange(ny) + 0.5) * (d1 - d0) / ny
    rows = _map(_row_labels, [(float(d), xs, p) for d in ys], workers)
    arr = np.array(rows, dtype=object)  # (ny, nx, 3)
    return xs, ys, arr[:, :, 0].astype(str), arr[:, :, 1].astype(str), arr[:, :, 2].astype(str)


def operating_diagram(s_in_range, d_range, grid, p: BioParams, workers: int | None = None,
                      curve_samples: int = 400, with_special: bool = True) -> OperatingDiagram:
    xs, ys, lab, theo, eig = grid_labels(s_in_range, d_range, grid, p, workers)
    curves = diagram_curves(p, d_range, curve_samples)
    special = special_points(p, d_range) if with_special and p.a > 0 else []
    return OperatingDiagram(p, xs, ys, lab, theo, eig, curves, special,
                            tuple(map(float, s_in_range)), tuple(map(float, d_range)))


def diagram_curves(p: BioParams, d_range, n: int = 400) -> list[DiagramCurve]:
    d0, d1 = d_range
    out = [curve(CurveId.GAMMA_U, d_range, n, p), curve(CurveId.GAMMA_B, d_range, n, p)]
    if p.a > 0:
        lo = max(d0, 1e-6)
        out.append(curve(CurveId.GAMMA_LP, (lo, d1), n, p))
        try:
            dh = min(hopf_extent(p, (1e-6, None)), d1)
            # log spacing resolves the small-D end, linear the rest
            for ident in (CurveId.GAMMA_H1, CurveId.GAMMA_H2):
                a = curve(ident, (1e-6, dh), n // 2, p, spacing="log")
                b = curve(ident, (lo, dh), n // 2, p)
                pts = np.unique(np.vstack([a.points, b.points]), axis=0)
                pts = pts[np.argsort(pts[:, 1])]
                out.append(DiagramCurve(ident, pts))
        except InconclusiveError as exc:
            log.info("no Hopf curve: %s", exc)
    return [c for c in out if len(c.points)]


# --- special points ----------------------------------------------------------------------

def _axis_limit(fn, delta: float) -> tuple[float, float] | None:
    """Quadratic extrapolation to D = 0 from samples at delta, 2 delta, 3 delta;
    the spread is its distance from the linear extrapolation of the two nearest."""
    ds = np.array([delta, 2 * delta, 3 * delta])
    vals = [fn(d) for d in ds]
    if any(v is None for v in vals):
        return None
    y = np.array(vals, dtype=float)
    quad = 3 * y[0] - 3 * y[1] + y[2]
    lin = 2 * y[0] - y[1]
    return float(quad), float(abs(quad - lin))


def special_points(p: BioParams, d_range: tuple[float, float] | None = None,
                   delta: float = 1e-4) -> list[SpecialPoint]:
    out: list[SpecialPoint] = []
    if p.a == 0:
        return out
    be0 = break_evens(0.0, p)
    bounds = [x for x in (be0.d_bar_u, be0.d_bar_b) if math.isfinite(x) and x > 0]
    d_lo, d_hi = d_range if d_range else (0.0, max(bounds, default=0.0))

    dbar = critical_dilution_dbar(p)
    if dbar is not None and d_lo <= dbar <= d_hi:
        out.append(SpecialPoint("Cusp", (break_evens(dbar, p).lambda_bp, dbar),
                                ("GammaLP", "GammaBP")))

    if d_lo <= 0:
        def bp(d):
            return break_evens(d, p).lambda_bp

        def h1(d):
            pair = _hopf_pair(d, p)
            return None if pair is None else hopf_s_in(pair[1], d, p)

        for fn, prov in ((bp, ("GammaBP", "D=0")), (h1, ("GammaH", "D=0"))):
            lim = _axis_limit(fn, delta)
            if lim is not None:
                out.append(SpecialPoint("BogdanovTakens", (lim[0], 0.0), prov,
                                        "Uncertain" if lim[1] > 1e-3 else ""))

    # Gamma_u meets Gamma_b
    lim_u = min(be0.d_bar_u, be0.d_bar_b, d_hi)
    if not lim_u > max(d_lo, 0.0):
        return out
    ds = np.linspace(max(d_lo, 0.0), lim_u, 2001)[:-1]

    def gap(d):
        be = break_evens(d, p)
        if be.lambda_u is None or be.lambda_b is None:
            return math.nan
        return be.lambda_u - be.lambda_b

    g = np.array([gap(d) for d in ds])
    for i in np.flatnonzero(np.isfinite(g[:-1]) & np.isfinite(g[1:]) & (g[:-1] * g[1:] < 0)):
        dx = brentq(gap, ds[i], ds[i + 1], xtol=1e-14)
        out.append(SpecialPoint("BogdanovTakens", (break_evens(dx, p).lambda_u, dx),
                                ("GammaU", "GammaB")))
    return out


# --- one-parameter diagram -----------------------------------------------------------------

@dataclass(frozen=True)
class BifEvent:
    s_in: float
    type: str  # LP | BP | H | Hom
    note: str = ""


@dataclass
class BifurcationDiagram1D:
    fixed_d: float
    branches: list[tuple[float, float, str, bool]]  # (S_in, S*, kind, stable)
    events: list[BifEvent]
    notices: list[str] = field(default_factory=list)

    def stability_table(self, p: BioParams) -> list[tuple[float, float, dict[str, str]]]:
        """Steady-state inventory on each interval between consecutive events."""
        cuts = [e.s_in for e in self.events]
        edges = [0.0] + cuts + [cuts[-1] + max(1.0, cuts[-1]) if cuts else 1.0]
        rows = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (lo + hi)
            op = OperatingPoint(mid, self.fixed_d)
            inv = {"E0": "-", "E1^1": "-", "E1^2": "-"}
            for e in RowContext(self.fixed_d, p).steady_states(mid):
                name = _NAMES[e.kind]
                if name in inv:
                    inv[name] = classify(e, op, p).letter
            rows.append((lo, hi if hi != edges[-1] else math.inf, inv))
        return rows


def _homoclinic_events(d, h_lo, h_hi, p, period_cap, budget, notices) -> list[BifEvent]:
    """Scan a geometric ladder inside (h_lo, h_hi), bisect every predicate flip."""
    span = h_hi - h_lo
    offs = [span * 2.0**-k for k in range(1, 40) if span * 2.0**-k > 5e-4]
    ladder = sorted({h_lo + o for o in offs} | {h_hi - o for o in offs})
    flags = [cycle_predicate(s, d, p, period_cap, budget) for s in ladder]
    decided = [(s, f) for s, f in zip(ladder, flags) if f is not None]
    events = []
    for (a, fa), (b, fb) in zip(decided, decided[1:]):
        if fa != fb:
            try:
                events.append(BifEvent(homoclinic_locate(d, (a, b), p, period_cap, budget=budget),
                                       "Hom", f"period cap {period_cap:g} h"))
            except InconclusiveError as exc:
                notices.append(f"homoclinic search in ({a:.6g}, {b:.6g}) inconclusive: {exc}")
    return events


def bifurcation_1d(fixed_d: float, s_in_range: tuple[float, float], p: BioParams,
                   with_cycles: bool = False, n: int = 600, period_cap: float = PERIOD_CAP,
                   budget: float | None = None) -> BifurcationDiagram1D:
    if fixed_d <= 0:
        raise DomainError("fixed_d must be > 0")
    lo, hi = s_in_range
    ctx = RowContext(fixed_d, p)
    branches: list[tuple[float, float, str, bool]] = []
    bp = math.inf if ctx.breaks.lambda_bp is None else ctx.breaks.lambda_bp
    for s in np.linspace(lo, hi, n):
        branches.append((float(s), float(s), SteadyKind.WASHOUT.value, bool(s < bp)))
    if ctx.interval is not None and p.a > 0:
        a, b = ctx.interval
        if not math.isfinite(b):
            b = hi
        grid = _guarded(_node_grid(a, b, n), fixed_d, p)[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            pr = profiles(grid, fixed_d, p)
        s_in = grid + pr["h"] / fixed_d
        keep = (pr["u"] > 0) & (pr["v"] > 0) & (s_in >= lo) & (s_in <= hi)
        for s, si, uu, vv, hp, phi, psi in zip(grid[keep], s_in[keep], pr["u"][keep], pr["v"][keep],
                                               pr["hp"][keep], pr["phi"][keep], pr["psi"][keep]):
            kind = SteadyKind.BRANCH1 if phi * (p.b - psi) * (fixed_d + hp) > 0 else SteadyKind.BRANCH2
            ss = SteadyState(kind, State(float(s), float(uu), float(vv)), float(s))
            verdict = classify(ss, OperatingPoint(float(si), fixed_d), p)
            branches.append((float(si), float(s), kind.value, verdict.stable))

    events: list[BifEvent] = []
    if ctx.fold is not None:
        events.append(BifEvent(ctx.fold.lambda_lp, "LP"))
    if math.isfinite(bp):
        events.append(BifEvent(bp, "BP"))
    hopf = [hopf_s_in(s, fixed_d, p) for s in hopf_roots(fixed_d, p, ctx)] if p.a > 0 else []
    events += [BifEvent(h, "H") for h in hopf]
    notices = []
    if with_cycles and len(hopf) >= 2:
        budget = budget or 40.0 * period_cap
        events += _homoclinic_events(fixed_d, min(hopf), max(hopf), p, period_cap, budget, notices)
    elif not with_cycles:
        notices.append("homoclinic search skipped (with_cycles is false)")
    events = sorted((e for e in events if lo <= e.s_in <= hi), key=lambda e: e.s_in)
    return BifurcationDiagram1D(fixed_d, branches, events, notices)


# --- flocculation sweep ------------------------------------------------------------------------

def flocculation_sweep(pairs, s_in_range, d_range, grid, p_base: BioParams,
                       workers: int | None = None) -> list[tuple[tuple[float, float], OperatingDiagram]]:
    if not pairs:
        raise DomainError("at least one (a, b) pair is required")
    out = []
    for a, b in pairs:
        p = p_base.replace(a=float(a), b=float(b))
        out.append(((float(a), float(b)), operating_diagram(s_in_range, d_range, grid, p, workers)))
    return out


__all__ = [
    "CurveId", "Region", "DiagramCurve", "RegionLabel", "SpecialPoint", "OperatingDiagram",
    "BifEvent", "BifurcationDiagram1D", "curve", "curve_residual", "hopf_extent",
    "classify_region", "theoretical_region", "eigen_region", "grid_labels", "operating_diagram",
    "diagram_curves", "special_points", "bifurcation_1d", "flocculation_sweep",
    "REGION_COLORS", "CURVE_COLORS",
]
