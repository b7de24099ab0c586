"""Trajectories, attractors, limit-cycle periods and homoclinic location.

Integration runs through the compiled Dormand-Prince kernel for Monod
kinetics and through ``scipy.integrate.solve_ivp`` (RK45) otherwise.  For
D < 1e-3 the system is integrated in rescaled time tau = D t.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .equilibria import RowContext, SteadyKind
from .model import BioParams, DomainError, OperatingPoint, State, jacobian, vector_field
from .stability import classify

log = logging.getLogger(__name__)

DEFAULT_TOL = (1e-12, 1e-10)  # (abs, rel)
MIN_SAMPLES = 2000
RESCALE_BELOW = 1e-3
MAX_STEPS = 50_000_000
PERIOD_CAP = 500.0


class IntegrationError(RuntimeError):
    pass


class StiffnessError(IntegrationError):
    """Step size fell below 1e-14 * t_end."""


class DivergenceError(IntegrationError):
    """State left the box [-1e-12, 10 (S_in + 1)]^3."""


class PeriodUnresolved(RuntimeError):
    """Fewer than five section returns, or returns not yet regular."""


class InconclusiveError(RuntimeError):
    def __init__(self, msg: str, probes: list | None = None):
        super().__init__(msg)
        self.probes = probes or []


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, 3): S, u, v
    accepted_steps: int
    rejected_steps: int
    tolerance_used: tuple[float, float]

    @property
    def final(self) -> State:
        return State(*map(float, self.states[-1]))

    def to_csv(self, path, header_lines: list[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines or []:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "S", "u", "v"])
            for t, x in zip(self.times, self.states):
                w.writerow([f"{t:.17g}"] + [f"{c:.17g}" for c in x])


class AttractorKind(str, Enum):
    EQUILIBRIUM = "Equilibrium"
    LIMIT_CYCLE = "LimitCycle"
    WASHOUT = "Washout"
    UNDETERMINED = "Undetermined"


@dataclass
class AttractorReport:
    kind: AttractorKind
    transient_time: float
    state: State | None = None
    period: float | None = None
    orbit: Trajectory | None = None
    diagnostics: dict = field(default_factory=dict)


# --- integration -----------------------------------------------------------------

def _check_init(init) -> np.ndarray:
    x = np.asarray(init, dtype=float)
    if x.shape != (3,) or not np.all(np.isfinite(x)):
        raise DomainError(f"initial state must be 3 finite numbers, got {init}")
    if np.any(x < 0):
        raise DomainError(f"initial state must be nonnegative, got {init}")
    return x


def _solve(x0, op, p, t_end, t_out, tol):
    """Integrate from 0 to t_end; returns (y_out, y_end, n_acc, n_rej)."""
    atol, rtol = tol
    upper = 10.0 * (op.s_in + 1.0)
    rescale = 0 < op.d < RESCALE_BELOW
    k = op.d if rescale else 1.0
    if p.is_monod:
        y_out, y_end, n_acc, n_rej, status, t_r = kernels.dopri5(
            p.as_array(), float(op.s_in), float(op.d), 1.0 / k, np.array(x0, dtype=float),
            float(t_end * k), float(rtol), float(atol), np.asarray(t_out, dtype=float) * k,
            upper, MAX_STEPS)
        if status == kernels.STEP_UNDERFLOW:
            raise StiffnessError(f"step size underflow at t={t_r / k:.6g} h ({op})")
        if status == kernels.DIVERGED:
            raise DivergenceError(f"state left the admissible box at t={t_r / k:.6g} h ({op})")
        if status == kernels.MAX_STEPS:
            raise IntegrationError(f"step budget exhausted at t={t_r / k:.6g} h ({op})")
        return y_out, y_end, int(n_acc), int(n_rej)
    return _solve_scipy(x0, op, p, t_end, t_out, tol, upper)


def _solve_scipy(x0, op, p, t_end, t_out, tol, upper):
    from scipy.integrate import solve_ivp

    def fun(_t, x):
        return vector_field(np.where((x < 0) & (x > -1e-13), 0.0, x), op, p)

    def escape(_t, x):
        return upper - x.max()

    escape.terminal = True
    sol = solve_ivp(fun, (0.0, t_end), x0, method="RK45", t_eval=t_out, rtol=tol[1],
                    atol=tol[0], events=escape)
    if sol.status == 1:
        raise DivergenceError(f"state left the admissible box ({op})")
    if sol.status != 0:
        raise IntegrationError(sol.message)
    y = sol.y.T
    return np.maximum(y, np.where(y > -1e-12, 0.0, y)), y[-1], int(sol.nfev // 6), 0


def integrate(init, op: OperatingPoint, p: BioParams, t_end: float,
              tol: tuple[float, float] = DEFAULT_TOL, n_samples: int = MIN_SAMPLES) -> Trajectory:
    """Adaptive 5(4) integration with evenly spaced dense output."""
    x0 = _check_init(init)
    if not t_end > 0:
        raise DomainError("t_end must be > 0")
    if not (tol[0] > 0 and tol[1] > 0):
        raise DomainError("tolerances must be > 0")
    n = max(int(n_samples), MIN_SAMPLES)
    times = np.linspace(0.0, t_end, n)
    y, _, n_acc, n_rej = _solve(x0, op, p, t_end, times, tol)
    return Trajectory(times, y, n_acc, n_rej, (float(tol[0]), float(tol[1])))


def flow(x0, op: OperatingPoint, p: BioParams, t: float, tol=DEFAULT_TOL) -> np.ndarray:
    """State at time t (no sampling)."""
    if t <= 0:
        return np.asarray(x0, dtype=float).copy()
    _, y_end, _, _ = _solve(np.asarray(x0, dtype=float), op, p, t, np.empty(0), tol)
    return np.asarray(y_end)


# --- Poincare section --------------------------------------------------------------

@dataclass(frozen=True)
class Section:
    center: np.ndarray
    normal: np.ndarray

    @classmethod
    def from_cloud(cls, x: np.ndarray) -> "Section":
        c = x.mean(axis=0)
        _, _, vt = np.linalg.svd(x - c, full_matrices=False)
        return cls(c, vt[0])

    def value(self, x) -> np.ndarray:
        return (np.asarray(x) - self.center) @ self.normal


def _returns(times, states, sec: Section, op, p) -> tuple[np.ndarray, np.ndarray]:
    """Upward section crossings, located on the cubic Hermite interpolant."""
    g = sec.value(states)
    idx = np.flatnonzero((g[:-1] < 0) & (g[1:] >= 0))
    ts, xs = [], []
    for i in idx:
        t0, t1 = times[i], times[i + 1]
        h = t1 - t0
        x0, x1 = states[i], states[i + 1]
        f0 = vector_field(np.maximum(x0, 0), op, p)
        f1 = vector_field(np.maximum(x1, 0), op, p)

        def herm(th):
            h00 = 2 * th**3 - 3 * th**2 + 1
            h10 = th**3 - 2 * th**2 + th
            h01 = -2 * th**3 + 3 * th**2
            h11 = th**3 - th**2
            return h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1

        lo, hi = 0.0, 1.0
        glo = g[i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            gm = sec.value(herm(mid))
            if (gm < 0) == (glo < 0):
                lo, glo = mid, gm
            else:
                hi = mid
        th = 0.5 * (lo + hi)
        ts.append(t0 + th * h)
        xs.append(herm(th))
    return np.asarray(ts), np.asarray(xs).reshape(-1, 3)


def _exact_crossing(x_start, t_guess, sec: Section, op, p, tol) -> tuple[float, np.ndarray]:
    """Newton on t -> section.value(flow(x_start, t)) from a nearby guess."""
    t = t_guess
    x = flow(x_start, op, p, t, tol)
    for _ in range(12):
        gv = sec.value(x)
        slope = float(sec.normal @ vector_field(np.maximum(x, 0), op, p))
        if slope == 0:
            break
        dt = -gv / slope
        t += dt
        x = flow(x_start, op, p, t, tol)
        if abs(dt) < 1e-13 * max(1.0, t):
            break
    return t, x


# --- attractors -----------------------------------------------------------------------

def unstable_seeds(op: OperatingPoint, p: BioParams, rel: float = 1e-3) -> list[State]:
    """Small displacements off each unstable positive equilibrium along its
    leading unstable eigendirection (both orientations)."""
    out = []
    for e in RowContext(op.d, p).steady_states(op.s_in):
        if not e.kind.positive:
            continue
        verdict = classify(e, op, p)
        if verdict.stable:
            continue
        j = jacobian(e.state, op, p)
        w, vecs = np.linalg.eig(j)
        k = int(np.argmax(w.real))
        vec = np.real(vecs[:, k])
        vec /= np.linalg.norm(vec)
        x = np.asarray(e.state)
        step = rel * np.linalg.norm(x)
        for sgn in (1.0, -1.0):
            out.append(State(*np.maximum(x + sgn * step * vec, 0.0)))
    return out


def _nearest_equilibrium(x, op, p):
    best, dist = None, math.inf
    for e in RowContext(op.d, p).steady_states(op.s_in):
        dd = float(np.max(np.abs(np.asarray(e.state) - x)))
        if dd < dist:
            best, dist = e, dd
    return best, dist


def _analyse_window(traj: Trajectory, op, p, min_returns: int):
    sec = Section.from_cloud(traj.states)
    ts, xs = _returns(traj.times, traj.states, sec, op, p)
    return sec, ts, xs


def attractor_probe(init, op: OperatingPoint, p: BioParams, budget: float,
                    transient_frac: float = 0.6, tol: tuple[float, float] = DEFAULT_TOL,
                    eq_tol: float = 1e-7, n_window: int = 20000) -> AttractorReport:
    """Integrate, drop the transient and decide what the orbit settles on."""
    x0 = _check_init(init)
    t_tr = transient_frac * budget
    x1 = flow(x0, op, p, t_tr, tol)
    window = budget - t_tr
    traj = integrate(x1, op, p, window, tol, n_window)
    diag: dict = {"budget": budget, "window": window}

    # (i) equilibrium lock-on
    e_end, d_end = _nearest_equilibrium(traj.states[-1], op, p)
    _, d_mid = _nearest_equilibrium(traj.states[len(traj.states) // 2], op, p)
    diag["eq_distance"] = d_end
    if e_end is not None and d_end < eq_tol and d_end <= d_mid:
        if e_end.kind == SteadyKind.WASHOUT:
            return AttractorReport(AttractorKind.WASHOUT, t_tr, state=e_end.state, diagnostics=diag)
        return AttractorReport(AttractorKind.EQUILIBRIUM, t_tr, state=e_end.state, diagnostics=diag)

    # (ii) limit cycle
    report = _cycle_from_window(traj, t_tr, op, p, tol, diag)
    if report is not None:
        return report

    # (iii) washout
    last = traj.states[-1]
    if last[1] + last[2] < 1e-10:
        return AttractorReport(AttractorKind.WASHOUT, t_tr, state=State(op.s_in, 0.0, 0.0),
                               diagnostics=diag)
    diag["final_state"] = tuple(map(float, last))
    return AttractorReport(AttractorKind.UNDETERMINED, t_tr, diagnostics=diag)


def _resample_if_coarse(traj, ts, op, p, tol):
    """Re-integrate the tail when samples are too sparse per period."""
    if ts.size < 2:
        return traj
    period = float(np.median(np.diff(ts)))
    dt = traj.times[1] - traj.times[0]
    if period / dt >= 60:
        return traj
    span = min(traj.times[-1] - traj.times[0], 40 * period)
    start = traj.times[-1] - span
    k = int(np.searchsorted(traj.times, start))
    n = int(min(400_000, max(MIN_SAMPLES, 200 * span / period)))
    t2 = integrate(traj.states[k], op, p, traj.times[-1] - traj.times[k], tol, n)
    return Trajectory(t2.times + traj.times[k], t2.states, t2.accepted_steps,
                      t2.rejected_steps, t2.tolerance_used)


def _cycle_from_window(traj, t_tr, op, p, tol, diag, min_returns: int = 5):
    x = traj.states
    span = np.ptp(x, axis=0)
    scale = 1.0 + np.max(np.abs(x))
    if np.max(span) < 1e-9 * scale:
        diag["cycle"] = "no oscillation"
        return None
    sec, ts, xs = _analyse_window(traj, op, p, min_returns)
    if ts.size >= 2:
        traj = _resample_if_coarse(traj, ts, op, p, tol)
        sec, ts, xs = _analyse_window(traj, op, p, min_returns)
    diag["returns"] = int(ts.size)
    if ts.size < min_returns:
        diag["cycle"] = "too few returns"
        return None
    # amplitude must not decay (a slowly damped focus also returns regularly)
    proj = sec.value(x)
    q = len(proj) // 4
    a_first, a_last = np.ptp(proj[:q]), np.ptp(proj[-q:])
    diag["amplitude_ratio"] = float(a_last / a_first) if a_first > 0 else math.nan
    if a_first > 0 and a_last < 0.9 * a_first:
        diag["cycle"] = "amplitude decaying"
        return None
    if a_last > 1.1 * a_first:
        diag["cycle"] = "amplitude still growing"
        return None
    # return map must contract onto a fixed point
    jumps = np.max(np.abs(np.diff(xs, axis=0)), axis=1)
    amp = float(np.max(np.ptp(x, axis=0)))
    diag["return_jump"] = float(jumps[-1])
    # either still contracting or already down at the integration noise floor
    settled = jumps[-1] < 1e-5 * amp or jumps[-1] <= jumps[0]
    if not (settled and jumps[-1] < 1e-3 * amp):
        diag["cycle"] = "return map not contracting"
        return None
    periods = np.diff(ts)
    period = float(periods.mean())
    diag["period_spread"] = float(np.ptp(periods) / period)

    # close the orbit exactly: iterate the return map from the last crossing
    x_start, t_on = xs[-1], period
    closure = float(jumps[-1])
    for _ in range(6):
        t_ret, x_ret = _exact_crossing(x_start, t_on, sec, op, p, tol)
        upward = float(sec.normal @ vector_field(np.maximum(x_ret, 0), op, p)) > 0
        if not (upward and abs(t_ret - period) < 0.1 * period):
            break  # Newton slid onto another crossing; keep the interpolated return
        closure = float(np.max(np.abs(x_ret - x_start)))
        t_on = t_ret
        if closure < 1e-7:
            break
        x_start = x_ret
    period = t_on
    orbit = integrate(x_start, op, p, period, tol, MIN_SAMPLES)
    diag["closure"] = closure
    return AttractorReport(AttractorKind.LIMIT_CYCLE, t_tr, state=State(*map(float, x_start)),
                           period=period, orbit=orbit, diagnostics=diag)


def cycle_period(op: OperatingPoint, p: BioParams, seed, budget: float,
                 tol: tuple[float, float] = DEFAULT_TOL, spread_tol: float = 1e-3) -> float:
    """Mean Poincare return time over at least five returns."""
    rep = attractor_probe(seed, op, p, budget, tol=tol)
    if rep.kind != AttractorKind.LIMIT_CYCLE:
        raise PeriodUnresolved(f"no cycle from seed at {op}: {rep.kind.value} {rep.diagnostics}")
    if rep.diagnostics.get("returns", 0) < 5:
        raise PeriodUnresolved(f"only {rep.diagnostics.get('returns')} returns at {op}")
    if rep.diagnostics.get("period_spread", 1.0) >= spread_tol and rep.diagnostics["closure"] > 1e-6:
        raise PeriodUnresolved(f"return times spread {rep.diagnostics['period_spread']:.2g} at {op}")
    return float(rep.period)


# --- homoclinic --------------------------------------------------------------------

def cycle_predicate(s_in: float, d: float, p: BioParams, period_cap: float = PERIOD_CAP,
                    budget: float = 40.0 * PERIOD_CAP, tol: tuple[float, float] = DEFAULT_TOL,
                    probes: list | None = None) -> bool | None:
    """True when a cycle with period <= period_cap attracts an unstable-equilibrium
    seed, False when the seeds settle elsewhere, None when still undecided after
    a fourfold budget extension (typically right next to a Hopf point)."""
    op = OperatingPoint(s_in, d)
    seeds = unstable_seeds(op, p)
    verdict, period = False, None
    for b in (budget, 4 * budget):
        undecided = False
        for seed in seeds:
            try:
                rep = attractor_probe(seed, op, p, b, tol=tol)
            except IntegrationError as exc:
                if probes is not None:
                    probes.append({"s_in": s_in, "error": str(exc)})
                continue
            if rep.kind == AttractorKind.LIMIT_CYCLE:
                period = rep.period
                verdict = rep.period <= period_cap
                break
            undecided |= rep.kind == AttractorKind.UNDETERMINED
        else:
            if undecided:
                verdict = None
                continue
        break
    if probes is not None:
        probes.append({"s_in": s_in, "cycle": verdict, "period": period, "seeds": len(seeds)})
    log.info("cycle probe S_in=%.6f cycle=%s period=%s", s_in, verdict, period)
    return verdict


def _has_short_cycle(s_in, d, p, period_cap, budget, tol, probes) -> bool:
    return bool(cycle_predicate(s_in, d, p, period_cap, budget, tol, probes))


def homoclinic_locate(d: float, bracket: tuple[float, float], p: BioParams,
                      period_cap: float = PERIOD_CAP, width: float = 1e-3,
                      budget: float | None = None, tol: tuple[float, float] = DEFAULT_TOL) -> float:
    """Bisect on 'a cycle with period <= period_cap exists' (seeded off the
    unstable equilibria); returns the midpoint of the final bracket."""
    lo, hi = bracket
    if not lo < hi:
        raise DomainError("bracket must satisfy lo < hi")
    width = min(width, 5e-3)
    budget = budget or 40.0 * period_cap
    probes: list = []
    p_lo = _has_short_cycle(lo, d, p, period_cap, budget, tol, probes)
    p_hi = _has_short_cycle(hi, d, p, period_cap, budget, tol, probes)
    if p_lo == p_hi:
        raise InconclusiveError(
            f"cycle predicate is {p_lo} at both ends of [{lo}, {hi}]", probes)
    while hi - lo >= width:
        mid = 0.5 * (lo + hi)
        if _has_short_cycle(mid, d, p, period_cap, budget, tol, probes) == p_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


__all__ = [
    "Trajectory", "AttractorKind", "AttractorReport", "Section", "IntegrationError",
    "StiffnessError", "DivergenceError", "PeriodUnresolved", "InconclusiveError",
    "integrate", "flow", "attractor_probe", "unstable_seeds", "cycle_period",
    "homoclinic_locate", "cycle_predicate", "PERIOD_CAP",
]
