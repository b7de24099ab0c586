"""Compiled vs. pure-NumPy kernels.

Each backend runs in its own interpreter because the numba switch is read at
import time.  Usage::

    python benchmarks/bench_kernels.py            # both backends, summary table
    python benchmarks/bench_kernels.py --worker   # one backend (internal)
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat):
    fn()  # warm-up (includes JIT compilation / disk cache load)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def worker(repeat: int) -> dict:
    import numpy as np

    from flocstat import OperatingPoint, integrate, preset_params
    from flocstat._accel import NUMBA_ENABLED
    from flocstat.diagrams import grid_labels
    from flocstat.equilibria import RowContext

    p = preset_params("line3")
    op = OperatingPoint(9.0, 0.1)
    ctx = RowContext(0.1, p)
    s_values = np.linspace(0.05, 20.0, 200)

    cases = {
        "integrate t=2000 (line3, S_in=9)": lambda: integrate((1, 1, 1), op, p, 2000.0),
        "balance root scan x200": lambda: [ctx.positive_roots(s) for s in s_values],
        "diagram 20x20 (line3)": lambda: grid_labels((0, 20), (0, 3.5), (20, 20), p, workers=1),
    }
    return {"numba": NUMBA_ENABLED,
            "results": {k: _best(fn, repeat) for k, fn in cases.items()}}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--worker", action="store_true")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if args.worker:
        print(json.dumps(worker(args.repeat)))
        return
    runs = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, FLOCSTAT_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        runs[label] = json.loads(out.stdout.strip().splitlines()[-1])["results"]
    print(f"{'case':38s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s}")
    for case in runs["numba"]:
        a, b = runs["numba"][case], runs["numpy"][case]
        print(f"{case:38s} {a:11.4f} {b:11.4f} {b / a:8.1f}x")


if __name__ == "__main__":
    main()
