"""Command-line entry point.

    flocstat steady-states --preset line3 --sin 5 --d 0.1
    flocstat bifurcation --preset line3 --d 0.1 --sin 0:10 --cycles
    flocstat operating-diagram --preset line1 --sin 0:8 --d 0:5 --grid 100x100

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 inconclusive.  Failures print a JSON object on stderr.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import artifacts
from .config import BLOCKS, PRESETS, ConfigError, ScenarioConfig, from_dict, load_config, to_dict
from .diagrams import _NAMES, bifurcation_1d, classify_region, flocculation_sweep, operating_diagram
from .diagrams import special_points as find_special_points
from .dynamics import InconclusiveError, attractor_probe, integrate
from .equilibria import break_evens, find_steady_states
from .model import PARAM_ORDER, DomainError, OperatingPoint
from .stability import classify

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCONCLUSIVE = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage errors through the JSON error path
        raise ConfigError(message)


# --- flag parsing helpers ----------------------------------------------------------------

def _float(text: str, name: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}", field=name) from None


def _range_or_value(text: str, name: str):
    if ":" in text:
        lo, hi = text.split(":", 1)
        return [_float(lo, name), _float(hi, name)]
    return _float(text, name)


def _grid(text: str):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"expected NxM, got {text!r}", field="grid")
    try:
        return [int(parts[0]), int(parts[1])]
    except ValueError:
        raise ConfigError(f"expected NxM, got {text!r}", field="grid") from None


def _triple(text: str):
    vals = [_float(t, "init") for t in text.split(",")]
    if len(vals) != 3:
        raise ConfigError(f"expected S,u,v, got {text!r}", field="init")
    return vals


def _pairs(text: str):
    out = []
    for chunk in text.split(";"):
        ab = [_float(t, "pairs") for t in chunk.split(",")]
        if len(ab) != 2:
            raise ConfigError(f"expected a,b pairs separated by ';', got {text!r}", field="pairs")
        out.append(ab)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML scenario file; flags override its values")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                        help="set one model parameter (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker processes (default: FLOCSTAT_THREADS or CPU count)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="flocstat", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("steady-states", parents=[common], help="steady states and their stability")
    p.add_argument("--sin", help="inflow substrate S_in")
    p.add_argument("--d", help="dilution rate D")

    p = sub.add_parser("simulate", parents=[common], help="integrate a trajectory")
    p.add_argument("--sin")
    p.add_argument("--d")
    p.add_argument("--init", help="initial state S,u,v")
    p.add_argument("--t-end")
    p.add_argument("--samples", type=int)
    p.add_argument("--atol")
    p.add_argument("--rtol")
    p.add_argument("--probe", action="store_true", default=None,
                   help="also classify the attractor reached")

    p = sub.add_parser("bifurcation", parents=[common], help="one-parameter diagram in S_in")
    p.add_argument("--d")
    p.add_argument("--sin", help="lo:hi")
    p.add_argument("--samples", type=int)
    p.add_argument("--cycles", action="store_true", default=None, help="locate homoclinic points")
    p.add_argument("--period-cap")

    p = sub.add_parser("operating-diagram", parents=[common], help="regions in the (S_in, D) plane")
    p.add_argument("--sin", help="lo:hi")
    p.add_argument("--d", help="lo:hi")
    p.add_argument("--grid", help="NxM cells")
    p.add_argument("--curve-samples", type=int)

    p = sub.add_parser("special-points", parents=[common], help="cusp and Bogdanov-Takens points")
    p.add_argument("--d", help="lo:hi")

    p = sub.add_parser("sweep", parents=[common], help="operating diagrams over (a, b) pairs")
    p.add_argument("--pairs", help="a,b;a,b;...")
    p.add_argument("--sin", help="lo:hi")
    p.add_argument("--d", help="lo:hi")
    p.add_argument("--grid", help="NxM cells")
    return ap


_BLOCK_OF = {"steady-states": "steady_states", "simulate": "simulate", "bifurcation": "bifurcation",
             "operating-diagram": "operating_diagram", "special-points": "special_points",
             "sweep": "sweep"}


def resolve_config(args) -> ScenarioConfig:
    """File values first, then flag overrides, then validation."""
    doc = to_dict(load_config(args.config)) if args.config else {}
    if args.preset:
        doc.pop("params", None)
        doc["preset"] = args.preset
    if args.param:
        if "params" not in doc:
            if "preset" not in doc:
                raise ConfigError("--param needs a base (--preset or params in --config)",
                                  field="params")
            doc["params"] = {k: float(v) for k, v in PRESETS[doc.pop("preset")].items()}
            doc["params"].update(y_u=1.0, y_v=1.0)
        for item in args.param:
            name, sep, val = item.partition("=")
            if not sep or name not in PARAM_ORDER:
                raise ConfigError(f"expected NAME=VALUE with NAME in {', '.join(PARAM_ORDER)}, "
                                  f"got {item!r}", field="params")
            doc["params"][name] = _float(val, f"params.{name}")
    if args.out:
        doc["output"] = args.out
    if args.workers is not None:
        doc["workers"] = args.workers

    block = _BLOCK_OF[args.command]
    b = dict(doc.get(block) or {})
    flag_map = {
        "sin": ("s_in", _range_or_value), "d": ("d", _range_or_value), "grid": ("grid", _grid),
        "init": ("init", _triple), "t_end": ("t_end", _float), "samples": ("samples", None),
        "probe": ("probe", None), "cycles": ("cycles", None), "period_cap": ("period_cap", _float),
        "curve_samples": ("curve_samples", None), "pairs": ("pairs", _pairs),
    }
    for attr, (key, conv) in flag_map.items():
        val = getattr(args, attr, None)
        if val is None:
            continue
        b[key] = conv(val, key) if conv in (_float, _range_or_value) else (conv(val) if conv else val)
    for attr, key in (("atol", "abs"), ("rtol", "rel")):
        val = getattr(args, attr, None)
        if val is not None:
            b["tol"] = dict(b.get("tol") or {}, **{key: _float(val, f"tol.{key}")})
    doc[block] = b
    if "preset" not in doc and "params" not in doc:
        raise ConfigError("one of --preset, --config or --param is required", field="preset")
    return from_dict(doc)


# --- commands -------------------------------------------------------------------------------

def _eig_list(eigs):
    return [[z.real, z.imag] for z in eigs]


def cmd_steady_states(cfg: ScenarioConfig) -> dict:
    c, p = cfg.steady_states, cfg.params
    op = OperatingPoint(c.s_in, c.d)
    states = []
    for e in find_steady_states(op, p):
        v = classify(e, op, p)
        entry = {
            "name": _NAMES[e.kind], "kind": e.kind.value,
            "state": {"S": e.state.s, "u": e.state.u, "v": e.state.v},
            "stable": v.stable, "verdict": v.letter, "mechanism": v.mechanism.value,
            "eigenvalues": _eig_list(v.eigenvalues),
        }
        if v.rh is not None:
            entry["routh_hurwitz"] = {"c1": v.rh.c1, "c2": v.rh.c2, "c3": v.rh.c3, "c4": v.rh.c4}
        states.append(entry)
    be = break_evens(c.d, p)
    payload = {
        "operating_point": {"S_in": c.s_in, "D": c.d},
        "break_evens": {k: (math.inf if x is None else x) for k, x in
                        (("lambda_u", be.lambda_u), ("lambda_v", be.lambda_v),
                         ("lambda_b", be.lambda_b), ("lambda_bp", be.lambda_bp))},
        "region": classify_region(op, p).tag.value if c.d > 0 else None,
        "steady_states": states,
    }
    path = artifacts.write_json(Path(cfg.output) / "steady_states.json", payload, cfg)
    sys.stdout.write(path.read_text())
    return {"artifacts": [str(path)]}


def cmd_simulate(cfg: ScenarioConfig) -> dict:
    c, p = cfg.simulate, cfg.params
    op = OperatingPoint(c.s_in, c.d)
    tol = (c.tol.abs, c.tol.rel)
    traj = integrate(c.init, op, p, c.t_end, tol=tol, n_samples=c.samples)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trajectory.csv"
    traj.to_csv(path, artifacts.config_header(cfg))
    paths = [str(path)]
    if c.probe:
        rep = attractor_probe(c.init, op, p, budget=c.t_end, tol=tol)
        payload = {
            "attractor": rep.kind.value, "transient_time": rep.transient_time,
            "state": None if rep.state is None else list(rep.state),
            "period": rep.period,
            "diagnostics": {k: v for k, v in rep.diagnostics.items()
                            if isinstance(v, (int, float, str, bool, type(None)))},
        }
        paths.append(str(artifacts.write_json(out / "attractor.json", payload, cfg)))
    return {"artifacts": paths, "accepted_steps": traj.accepted_steps,
            "rejected_steps": traj.rejected_steps}


def cmd_bifurcation(cfg: ScenarioConfig) -> dict:
    c, p = cfg.bifurcation, cfg.params
    diag = bifurcation_1d(c.d, c.s_in, p, with_cycles=c.cycles, n=c.samples, period_cap=c.period_cap)
    out = Path(cfg.output)
    rows = [(s_in, s, kind, "S" if stable else "U") for s_in, s, kind, stable in diag.branches]
    p1 = artifacts.write_csv(out / "branches.csv", "S_in,S,kind,stability", rows, cfg)
    table = [{"from": lo, "to": hi, **inv} for lo, hi, inv in diag.stability_table(p)]
    payload = {
        "fixed_D": c.d,
        "events": [{"S_in": e.s_in, "type": e.type, "note": e.note} for e in diag.events],
        "stability_table": table,
        "notices": diag.notices,
    }
    p2 = artifacts.write_json(out / "events.json", payload, cfg)
    return {"artifacts": [str(p1), str(p2)], "events": payload["events"]}


def _diagram_artifacts(od, out: Path, cfg: ScenarioConfig, title: str):
    paths = artifacts.write_diagram_csvs(od, out, cfg)
    paths.append(artifacts.write_svg(out / "diagram.svg", od, cfg, title))
    summary = {
        "regions": sorted(od.label_set),
        "agreement": od.agreement,
        "areas": {r: od.area(r) for r in ("I0", "I1", "I2", "I3", "I4")},
        "boundary_cells": int((od.labels == "Boundary").sum()),
    }
    paths.append(artifacts.write_json(out / "summary.json", summary, cfg))
    return [str(x) for x in paths], summary


def cmd_operating_diagram(cfg: ScenarioConfig) -> dict:
    c, p = cfg.operating_diagram, cfg.params
    od = operating_diagram(c.s_in, c.d, c.grid, p, cfg.workers, curve_samples=c.curve_samples)
    paths, summary = _diagram_artifacts(od, Path(cfg.output), cfg, "operating diagram")
    return {"artifacts": paths, **summary}


def cmd_special_points(cfg: ScenarioConfig) -> dict:
    pts = find_special_points(cfg.params, cfg.special_points.d)
    path = artifacts.write_csv(Path(cfg.output) / "special_points.csv", "kind,S_in,D,flag",
                               artifacts.special_rows(pts), cfg)
    sys.stdout.write("kind,S_in,D,flag\n")
    for row in artifacts.special_rows(pts):
        sys.stdout.write(",".join(v if isinstance(v, str) else artifacts.fmt(v) for v in row) + "\n")
    return {"artifacts": [str(path)]}


def cmd_sweep(cfg: ScenarioConfig) -> dict:
    c = cfg.sweep
    results = flocculation_sweep(c.pairs, c.s_in, c.d, c.grid, cfg.params, cfg.workers)
    out = Path(cfg.output)
    paths, members = [], []
    for (a, b), od in results:
        sub = out / f"a{a:g}_b{b:g}"
        ps, summary = _diagram_artifacts(od, sub, cfg, f"a={a:g}, b={b:g}")
        paths += ps
        members.append({"a": a, "b": b, **summary})
    paths.append(str(artifacts.write_json(out / "sweep.json", {"members": members}, cfg)))
    return {"artifacts": paths, "I3_areas": [m["areas"]["I3"] for m in members]}


COMMANDS = {
    "steady-states": cmd_steady_states, "simulate": cmd_simulate, "bifurcation": cmd_bifurcation,
    "operating-diagram": cmd_operating_diagram, "special-points": cmd_special_points,
    "sweep": cmd_sweep,
}


def run_command(cmd: str, cfg: ScenarioConfig) -> dict:
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}")
    return COMMANDS[cmd](cfg)


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("field", "line"):
        if getattr(exc, attr, None) is not None:
            err[attr] = getattr(exc, attr)
    sys.stderr.write(artifacts.dumps_json(err))
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except (DomainError, OSError) as exc:  # parameter validation, unreadable config file
        return _fail(EXIT_CONFIG, exc)
    try:
        result = run_command(args.command, cfg)
    except InconclusiveError as exc:
        return _fail(EXIT_INCONCLUSIVE, exc)
    except (ConfigError, OSError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (ArithmeticError, ValueError, RuntimeError) as exc:  # DomainError and solver failures
        return _fail(EXIT_NUMERIC, exc)
    if args.command not in ("steady-states", "special-points"):
        sys.stdout.write(artifacts.dumps_json(result))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


__all__ = ["main", "build_parser", "resolve_config", "run_command", "BLOCKS"]
