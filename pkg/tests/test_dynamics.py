from __future__ import annotations

import math

import numpy as np
import pytest

from flocstat.dynamics import (
    AttractorKind,
    DivergenceError,
    InconclusiveError,
    PeriodUnresolved,
    attractor_probe,
    cycle_period,
    homoclinic_locate,
    integrate,
    unstable_seeds,
)
from flocstat.equilibria import SteadyKind, find_steady_states
from flocstat.model import DomainError, OperatingPoint, jacobian, vector_field
from flocstat.stability import _branch1, eigenvalues


def _period(s_in, p, d=0.1, budget=20000.0):
    op = OperatingPoint(s_in, d)
    for seed in unstable_seeds(op, p):
        try:
            return cycle_period(op, p, seed, budget)
        except PeriodUnresolved:
            continue
    raise PeriodUnresolved(f"no seed produced a cycle at S_in={s_in}")


class TestIntegrate:
    def test_mass_balance(self, line3):
        p = line3.replace(a=0.0, b=0.0, m_u=0.0, m_v=0.0, alpha=1.0, beta=1.0)
        op = OperatingPoint(5.0, 0.3)
        x0 = np.array([1.0, 2.0, 0.5])
        tr = integrate(x0, op, p, 40.0)
        m = tr.states.sum(axis=1)
        exact = 5.0 + (x0.sum() - 5.0) * np.exp(-0.3 * tr.times)
        assert np.max(np.abs(m - exact)) < 1e-6

    def test_samples_and_ordering(self, line3):
        tr = integrate((1, 1, 1), OperatingPoint(9.0, 0.1), line3, 100.0)
        assert tr.times.size >= 2000
        assert np.all(np.diff(tr.times) > 0)
        assert tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(100.0)
        assert tr.accepted_steps > 0 and tr.tolerance_used == (1e-12, 1e-10)

    def test_self_convergence_order(self, line3):
        # linearised approach to washout; global error vs accepted steps
        op = OperatingPoint(3.0, 0.1)
        x0 = (2.5, 0.3, 0.2)
        ref = np.array(integrate(x0, op, line3, 20.0, tol=(1e-15, 1e-14)).final)
        steps, errs = [], []
        for tol in (1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10):
            tr = integrate(x0, op, line3, 20.0, tol=(tol, tol))
            steps.append(tr.accepted_steps)
            errs.append(np.max(np.abs(np.array(tr.final) - ref)))
        slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
        assert -6.5 < slope < -4.0

    def test_converges_to_stable_equilibrium(self, line3):
        op = OperatingPoint(9.0, 0.1)
        tr = integrate((1, 1, 1), op, line3, 3000.0)
        e1 = next(e for e in find_steady_states(op, line3) if e.kind == SteadyKind.BRANCH1)
        assert np.max(np.abs(np.array(tr.final) - np.array(e1.state))) < 1e-6

    @pytest.mark.parametrize("s_in", [3.0, 9.0, 5.0])
    def test_nonnegativity(self, line3, s_in):
        rng = np.random.default_rng(int(s_in * 10))
        op = OperatingPoint(s_in, 0.1)
        for _ in range(34):
            x0 = rng.uniform(0, 5, 3) * (rng.uniform(size=3) > 0.2)
            tr = integrate(x0, op, line3, 200.0, n_samples=2000)
            assert tr.states.min() >= -1e-12

    def test_bad_inputs(self, line3):
        op = OperatingPoint(5.0, 0.1)
        with pytest.raises(DomainError):
            integrate((1, -1, 1), op, line3, 10.0)
        with pytest.raises(DomainError):
            integrate((1, 1, 1), op, line3, 0.0)
        with pytest.raises(DomainError):
            integrate((1, 1, 1), op, line3, 10.0, tol=(0.0, 1e-8))

    def test_divergence_box(self, line3):
        with pytest.raises(DivergenceError):
            integrate((500.0, 1.0, 1.0), OperatingPoint(5.0, 0.1), line3, 10.0)

    def test_tiny_d_rescaled(self, line5):
        op = OperatingPoint(48.0, 2.5e-5)
        tr = integrate((30.0, 0.1, 0.1), op, line5, 2e5, n_samples=2000)
        assert tr.states.min() >= -1e-12 and np.all(np.isfinite(tr.states))

    def test_csv(self, tmp_path, line3):
        tr = integrate((1, 1, 1), OperatingPoint(9.0, 0.1), line3, 10.0)
        path = tmp_path / "t.csv"
        tr.to_csv(path, ["note"])
        lines = path.read_text().splitlines()
        assert lines[0] == "# note" and lines[1] == "t,S,u,v"
        assert len(lines) == 2 + tr.times.size
        row = [float(x) for x in lines[-1].split(",")]
        assert row[1:] == list(tr.states[-1])  # 17 digits round-trip exactly


class TestAttractorProbe:
    def test_limit_cycle(self, line3):
        rep = attractor_probe((3.0, 0.05, 0.05), OperatingPoint(4.5, 0.1), line3, budget=4000.0)
        assert rep.kind == AttractorKind.LIMIT_CYCLE
        assert rep.period > 0
        assert rep.orbit is not None

    def test_washout(self, line3):
        rep = attractor_probe((1, 1, 1), OperatingPoint(3.0, 0.1), line3, budget=2000.0)
        assert rep.kind == AttractorKind.WASHOUT

    def test_equilibrium(self, line3):
        op = OperatingPoint(9.0, 0.1)
        rep = attractor_probe((1, 1, 1), op, line3, budget=3000.0)
        assert rep.kind == AttractorKind.EQUILIBRIUM
        assert np.max(np.abs(vector_field(rep.state, op, line3))) < 1e-8

    @pytest.mark.parametrize("s_in,expected", [
        (3.0, {AttractorKind.WASHOUT}),            # I0
        (9.0, {AttractorKind.EQUILIBRIUM}),        # I1, stable E1
        (5.0, {AttractorKind.LIMIT_CYCLE}),        # I3, cycle around unstable E1
        (3.9, {AttractorKind.WASHOUT}),            # past sigma_3, E1 unstable, no cycle
    ])
    def test_region_consistency(self, line3, s_in, expected):
        op = OperatingPoint(s_in, 0.1)
        kinds = set()
        for seed in unstable_seeds(op, line3) or [(1.0, 1.0, 1.0)]:
            kinds.add(attractor_probe(seed, op, line3, budget=6000.0).kind)
        assert kinds == expected


class TestCycles:
    def test_hopf_frequency_lower(self, line3):
        op = OperatingPoint(3.842, 0.1)
        w = max(abs(z.imag) for z in eigenvalues(jacobian(_branch1(op, line3).state, op, line3)))
        assert _period(3.842, line3) == pytest.approx(2 * math.pi / w, rel=0.1)

    def test_hopf_frequency_upper(self, line3):
        op = OperatingPoint(8.1, 0.1)
        w = max(abs(z.imag) for z in eigenvalues(jacobian(_branch1(op, line3).state, op, line3)))
        assert _period(8.1, line3) == pytest.approx(2 * math.pi / w, rel=0.1)

    def test_period_diverges_toward_sigma3(self, line3):
        periods = [_period(s, line3) for s in (3.843, 3.845, 3.846, 3.847, 3.8475)]
        assert np.all(np.diff(periods) > 0)

    def test_period_diverges_toward_sigma4(self, line3):
        periods = [_period(s, line3) for s in (4.2, 4.1, 4.06, 4.045, 4.038)]
        assert np.all(np.diff(periods) > 0)

    def test_unresolved_without_cycle(self, line3):
        with pytest.raises(PeriodUnresolved):
            cycle_period(OperatingPoint(9.0, 0.1), line3, (1, 1, 1), budget=2000.0)

    def test_homoclinic_inconclusive(self, line3):
        # the whole bracket lies inside the cycle window
        with pytest.raises(InconclusiveError):
            homoclinic_locate(0.1, (4.3, 4.5), line3)

    @pytest.mark.slow
    def test_homoclinic_sigma3(self, line3):
        assert homoclinic_locate(0.1, (3.845, 3.86), line3) == pytest.approx(3.8477, abs=5e-3)

    @pytest.mark.slow
    def test_homoclinic_sigma4(self, line3):
        assert homoclinic_locate(0.1, (4.0, 4.06), line3) == pytest.approx(4.03468, abs=5e-3)
