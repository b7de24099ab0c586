from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

SCRIPT = r"""
import json
import numpy as np
from flocstat import _accel
from flocstat.config import preset_params
from flocstat.diagrams import bifurcation_1d, grid_labels
from flocstat.dynamics import integrate
from flocstat.model import OperatingPoint
p = preset_params("line3")
tr = integrate((1, 1, 1), OperatingPoint(5.0, 0.1), p, 50.0)
ev = [e.s_in for e in bifurcation_1d(0.1, (0, 10), p).events]
lab = grid_labels((0, 20), (0, 3.5), (12, 10), p, workers=1)[2]
print(json.dumps({"numba": _accel.NUMBA_ENABLED, "final": list(map(float, tr.final)),
                  "events": ev, "labels": np.asarray(lab).astype(str).tolist()}))
"""


def _run(flag: str) -> dict:
    env = dict(os.environ, FLOCSTAT_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True,
                         check=True, timeout=600)
    return json.loads(out.stdout.strip().splitlines()[-1])


@pytest.mark.slow
def test_numpy_fallback_matches_numba():
    jit, ref = _run("0"), _run("1")
    assert ref["numba"] is False
    assert jit["final"] == pytest.approx(ref["final"], rel=1e-9, abs=1e-12)
    assert jit["events"] == pytest.approx(ref["events"], abs=1e-9)
    assert jit["labels"] == ref["labels"]
