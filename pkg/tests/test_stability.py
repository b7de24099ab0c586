from __future__ import annotations

import numpy as np
import pytest
from conftest import random_equilibria
from hypothesis import given, settings
from hypothesis import strategies as st

from flocstat.config import preset_params
from flocstat.equilibria import (
    SteadyKind,
    SteadyState,
    break_evens,
    existence_interval,
    find_steady_states,
    fold_locus,
    profiles,
)
from flocstat.model import OperatingPoint, State, jacobian
from flocstat.stability import (
    TOL_MARGIN,
    ConsistencyError,
    Mechanism,
    WrongKindError,
    _mechanism,
    c4_profile,
    classify,
    eigenvalues,
    hopf_roots,
    hopf_s_in,
    hopf_transversality,
    routh_hurwitz,
    washout_stable,
)


def _states(op, p):
    return {e.kind: e for e in find_steady_states(op, p)}


def char_residual(j, lam):
    return abs(np.linalg.det(j - lam * np.eye(3)))


class TestEigenvalues:
    def test_identity(self):
        assert eigenvalues(np.eye(3)) == pytest.approx([1, 1, 1], abs=1e-12)

    def test_diagonal(self):
        eig = eigenvalues(np.diag([-1.0, 2.0, -3.0]))
        assert [z.real for z in eig] == pytest.approx([-3, -1, 2], abs=1e-12)
        assert all(z.imag == 0 for z in eig)

    def test_companion(self):
        # x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3)
        c = np.array([[6.0, -11.0, 6.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        assert [z.real for z in eigenvalues(c)] == pytest.approx([1, 2, 3], abs=1e-12)

    def test_complex_pair(self):
        j = np.array([[0.0, -2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
        eig = sorted(eigenvalues(j), key=lambda z: z.imag)
        assert eig[0] == pytest.approx(-2j, abs=1e-12)
        assert eig[2] == pytest.approx(2j, abs=1e-12)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            eigenvalues(np.array([[np.nan, 0, 0], [0, 1, 0], [0, 0, 1]]))

    @given(st.lists(st.floats(-50, 50), min_size=9, max_size=9))
    @settings(max_examples=300, deadline=None)
    def test_residual_and_numpy(self, entries):
        j = np.array(entries).reshape(3, 3)
        eig = eigenvalues(j)
        scale = max(1.0, np.linalg.norm(j, 2) ** 3)
        for lam in eig:
            assert char_residual(j, lam) < 1e-8 * scale
        ref = np.sort_complex(np.linalg.eigvals(j))
        got = np.sort_complex(np.array(eig))
        # clustered roots are only determined to ~eps^(1/3); compare loosely
        big = max(1.0, np.abs(j).max())
        assert abs(np.sum(got) - np.trace(j)) < 1e-4 * big
        assert np.max(np.abs(got.real - ref.real)) <= 1e-4 * big


class TestRouthHurwitz:
    def test_stable_point(self, line3):
        op = OperatingPoint(9.0, 0.1)
        e1 = _states(op, line3)[SteadyKind.BRANCH1]
        rh = routh_hurwitz(e1, op, line3)
        assert rh.c3 > 0 and rh.c4 > 0
        assert max(z.real for z in eigenvalues(jacobian(e1.state, op, line3))) < 0

    def test_unstable_point(self, line3):
        op = OperatingPoint(5.0, 0.1)
        e1 = _states(op, line3)[SteadyKind.BRANCH1]
        rh = routh_hurwitz(e1, op, line3)
        assert rh.c3 > 0 and rh.c4 < 0

    def test_wrong_kind(self, line3):
        op = OperatingPoint(5.0, 0.1)
        with pytest.raises(WrongKindError):
            routh_hurwitz(_states(op, line3)[SteadyKind.WASHOUT], op, line3)

    def test_m_entries_present(self, line3):
        op = OperatingPoint(9.0, 0.1)
        rh = routh_hurwitz(_states(op, line3)[SteadyKind.BRANCH1], op, line3)
        assert set(rh.m_entries) == {"m11", "m12", "m13", "m21", "m22", "a23", "m31", "m32", "m33"}

    @pytest.mark.parametrize("name", ["line1", "line2", "line3"])
    def test_c3_factorization(self, name):
        p = preset_params(name)
        for e, op in random_equilibria(p, 100, np.random.default_rng(5)):
            rh = routh_hurwitz(e, op, p)
            pr = profiles(e.s_star, op.d, p)
            fact = float(pr["phi"] * (p.b - pr["psi"]) * (op.d + pr["hp"]))
            assert rh.c3 == pytest.approx(fact, rel=1e-8, abs=1e-12)

    @pytest.mark.parametrize("name", ["line1", "line2", "line3"])
    def test_c4_identity(self, name):
        p = preset_params(name)
        for e, op in random_equilibria(p, 100, np.random.default_rng(6)):
            rh = routh_hurwitz(e, op, p)
            assert rh.c4 == pytest.approx(rh.c1 * rh.c2 - rh.c3, rel=1e-12, abs=1e-15)

    def test_c3_vanishes_at_fold(self, line3):
        s_lp, lam = fold_locus(0.1, line3)
        pr = profiles(s_lp, 0.1, line3)
        e = SteadyState(SteadyKind.BRANCH1, State(s_lp, float(pr["u"]), float(pr["v"])), s_lp)
        rh = routh_hurwitz(e, OperatingPoint(lam, 0.1), line3)
        assert abs(rh.c3) < 1e-9

    @pytest.mark.parametrize("name", ["line1", "line2", "line3"])
    def test_equivalence_with_eigenvalues(self, name):
        p = preset_params(name)
        checked = 0
        for e, op in random_equilibria(p, 350, np.random.default_rng(8)):
            rh = routh_hurwitz(e, op, p)
            if min(abs(rh.c3), abs(rh.c4)) < 1e-10:
                continue
            eig_stable = max(z.real for z in eigenvalues(jacobian(e.state, op, p))) < 0
            assert rh.stable == eig_stable
            checked += 1
        assert checked > 300


class TestClassify:
    def test_washout_stable(self, line3):
        op = OperatingPoint(3.0, 0.1)
        v = classify(_states(op, line3)[SteadyKind.WASHOUT], op, line3)
        assert v.stable and v.mechanism == Mechanism.ALL_NEGATIVE and v.letter == "S"

    def test_region_i3(self, line3):
        op = OperatingPoint(5.0, 0.1)
        st_ = _states(op, line3)
        assert not classify(st_[SteadyKind.WASHOUT], op, line3).stable
        v = classify(st_[SteadyKind.BRANCH1], op, line3)
        assert not v.stable and v.mechanism == Mechanism.COMPLEX_POSITIVE and v.rh_agrees

    def test_stable_positive(self, line3):
        op = OperatingPoint(9.0, 0.1)
        v = classify(_states(op, line3)[SteadyKind.BRANCH1], op, line3)
        assert v.stable and v.rh_agrees and v.max_real < -TOL_MARGIN

    def test_branch2_is_saddle(self, line3):
        op = OperatingPoint(3.9, 0.1)
        v = classify(_states(op, line3)[SteadyKind.BRANCH2], op, line3)
        assert not v.stable and v.mechanism == Mechanism.REAL_POSITIVE

    def test_marginal_band(self):
        assert _mechanism((complex(-1, 0), complex(5e-10, 1), complex(5e-10, -1))) == \
            (False, Mechanism.MARGINAL_IMAGINARY)
        assert _mechanism((complex(-1, 0), complex(-2, 0), complex(0, 0))) == \
            (False, Mechanism.MARGINAL_ZERO)

    def test_washout_inconsistency(self, line3):
        # a fake E0 whose S component is not S_in gives a Jacobian the closed form disagrees with
        op = OperatingPoint(3.0, 0.1)
        fake = SteadyState(SteadyKind.WASHOUT, State(20.0, 0.0, 0.0), 20.0)
        with pytest.raises(ConsistencyError):
            classify(fake, op, line3)

    @pytest.mark.parametrize("name", ["line1", "line2", "line3", "line5"])
    def test_washout_grid(self, name):
        p = preset_params(name)
        for d in np.linspace(0.01, 3.0, 50):
            bp = break_evens(d, p).lambda_bp
            for s_in in np.linspace(0.05, 20.0, 50):
                if bp is not None and abs(s_in - bp) < 1e-6:
                    continue
                op = OperatingPoint(s_in, d)
                e0 = SteadyState(SteadyKind.WASHOUT, State(s_in, 0.0, 0.0), s_in)
                assert classify(e0, op, p).stable == washout_stable(op, p)


class TestHopf:
    def test_line3_roots(self, line3):
        roots = hopf_roots(0.1, line3)
        assert roots == pytest.approx([1.963, 3.422], abs=2e-3)
        s_in = [hopf_s_in(s, 0.1, line3) for s in roots]
        assert sorted(s_in) == pytest.approx([3.842, 8.179], abs=2e-3)

    def test_transversality_signs(self, line3):
        s_in = sorted(hopf_s_in(s, 0.1, line3) for s in hopf_roots(0.1, line3))
        assert hopf_transversality(0.1, s_in[0], line3) > 0
        assert hopf_transversality(0.1, s_in[1], line3) < 0

    def test_not_a_hopf_point(self, line3):
        from flocstat.stability import DegenerateError

        with pytest.raises(DegenerateError):
            hopf_transversality(0.1, 9.0, line3)

    @pytest.mark.parametrize("d", [0.01, 0.1, 0.5, 1.0, 2.0, 3.0])
    def test_line1_c4_positive_on_branch(self, line1, d):
        lo, hi = existence_interval(d, line1)
        s = np.linspace(lo, hi, 2002)[1:-1]
        pr = profiles(s, d, line1)
        keep = (pr["u"] > 0) & (pr["v"] > 0)
        assert keep.sum() > 1900
        assert np.all(c4_profile(s[keep], d, line1) > 0)
        assert hopf_roots(d, line1) == []
