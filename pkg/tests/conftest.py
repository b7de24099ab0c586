from __future__ import annotations

import pytest

from flocstat.config import preset_params


@pytest.fixture(scope="session")
def line1():
    return preset_params("line1")


@pytest.fixture(scope="session")
def line2():
    return preset_params("line2")


@pytest.fixture(scope="session")
def line3():
    return preset_params("line3")


@pytest.fixture(scope="session")
def line5():
    return preset_params("line5")


def random_equilibria(p, n, rng, d_range=(0.005, 3.0)):
    """Positive equilibria sampled directly: pick D and S* in I, read S_in
    off the balance equation.  Yields (SteadyState, OperatingPoint)."""
    import numpy as np

    from flocstat.equilibria import SteadyKind, SteadyState, existence_interval, profiles
    from flocstat.model import OperatingPoint, State

    out = []
    while len(out) < n:
        d = rng.uniform(*d_range)
        iv = existence_interval(d, p)
        if iv is None:
            continue
        lo, hi = iv
        if not np.isfinite(hi):
            hi = lo + 50.0
        s = lo + (hi - lo) * rng.uniform(0.001, 0.999)
        pr = profiles(s, d, p)
        u, v = float(pr["u"]), float(pr["v"])
        if not (u > 0 and v > 0):
            continue
        s_in = s + float(pr["h"]) / d
        c3 = pr["phi"] * (p.b - pr["psi"]) * (d + pr["hp"])
        kind = SteadyKind.BRANCH1 if c3 > 0 else SteadyKind.BRANCH2
        out.append((SteadyState(kind, State(float(s), u, v), float(s)), OperatingPoint(s_in, d)))
    return out


# acceptance report: one line per criterion, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
