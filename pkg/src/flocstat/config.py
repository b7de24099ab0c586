"""Scenario configuration: YAML documents, presets and flag overrides.

A document holds either ``preset`` or ``params`` (never both) plus optional
per-command blocks::

    preset: line3
    bifurcation:
      d: 0.1
      s_in: [0, 10]
      cycles: true

Unknown keys are rejected with the offending path and line.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields

import yaml

from .model import PARAM_ORDER, BioParams, DomainError

PRESETS: dict[str, dict[str, float]] = {
    "line1": dict(m1=4.5, k1=1, m2=3, k2=2.7, a=2, b=3, alpha=0.8, beta=0.5, m_u=0.2, m_v=0.25),
    "line2": dict(m1=5, k1=2, m2=5, k2=3, a=4, b=2, alpha=1, beta=0.9, m_u=3.25, m_v=0),
    "line3": dict(m1=5, k1=2, m2=5, k2=3, a=4, b=2, alpha=1, beta=1, m_u=3.25, m_v=1),
    "line5": dict(m1=3.5, k1=2.5, m2=3, k2=1.5, a=1, b=1, alpha=1, beta=0.75, m_u=0.7, m_v=0.4),
}


def preset_params(name: str) -> BioParams:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (expected one of {', '.join(PRESETS)})",
                          field="preset")
    vals = {k: float(v) for k, v in PRESETS[name].items()}
    return BioParams(**vals, y_u=1.0, y_v=1.0)


class ConfigError(ValueError):
    def __init__(self, msg: str, field: str | None = None, line: int | None = None):
        where = ""
        if field:
            where += f" [field {field}]"
        if line is not None:
            where += f" [line {line}]"
        super().__init__(msg + where)
        self.field = field
        self.line = line


# --- command blocks -----------------------------------------------------------------

@dataclass(frozen=True)
class Tolerance:
    abs: float = 1e-12
    rel: float = 1e-10


@dataclass(frozen=True)
class SteadyStatesCfg:
    s_in: float = 5.0
    d: float = 0.1


@dataclass(frozen=True)
class SimulateCfg:
    s_in: float = 9.0
    d: float = 0.1
    init: tuple[float, float, float] = (1.0, 1.0, 1.0)
    t_end: float = 1000.0
    samples: int = 2000
    tol: Tolerance = field(default_factory=Tolerance)
    probe: bool = False


@dataclass(frozen=True)
class BifurcationCfg:
    d: float = 0.1
    s_in: tuple[float, float] = (0.0, 10.0)
    samples: int = 600
    cycles: bool = False
    period_cap: float = 500.0


@dataclass(frozen=True)
class DiagramCfg:
    s_in: tuple[float, float] = (0.0, 20.0)
    d: tuple[float, float] = (0.0, 3.5)
    grid: tuple[int, int] = (200, 200)
    curve_samples: int = 400


@dataclass(frozen=True)
class SpecialPointsCfg:
    d: tuple[float, float] | None = None


@dataclass(frozen=True)
class SweepCfg:
    pairs: tuple[tuple[float, float], ...] = ((4.0, 2.0), (0.5, 2.0), (0.01, 0.01), (0.0, 0.0))
    s_in: tuple[float, float] = (0.0, 20.0)
    d: tuple[float, float] = (0.0, 3.5)
    grid: tuple[int, int] = (200, 200)


BLOCKS = {
    "steady_states": SteadyStatesCfg,
    "simulate": SimulateCfg,
    "bifurcation": BifurcationCfg,
    "operating_diagram": DiagramCfg,
    "special_points": SpecialPointsCfg,
    "sweep": SweepCfg,
}


@dataclass(frozen=True)
class ScenarioConfig:
    params: BioParams
    preset: str | None = None
    steady_states: SteadyStatesCfg = field(default_factory=SteadyStatesCfg)
    simulate: SimulateCfg = field(default_factory=SimulateCfg)
    bifurcation: BifurcationCfg = field(default_factory=BifurcationCfg)
    operating_diagram: DiagramCfg = field(default_factory=DiagramCfg)
    special_points: SpecialPointsCfg = field(default_factory=SpecialPointsCfg)
    sweep: SweepCfg = field(default_factory=SweepCfg)
    output: str = "out"
    workers: int | None = None

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# --- parsing ----------------------------------------------------------------------------

def _line_index(node, prefix="", out=None) -> dict[str, int]:
    """Map dotted key paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _line_index(v, path, out)
    return out


def _num(val, path, lines, integer=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {val!r}", path, lines.get(path))
    if not math.isfinite(val):
        raise ConfigError("value must be finite", path, lines.get(path))
    if integer:
        if float(val) != int(val):
            raise ConfigError(f"expected an integer, got {val!r}", path, lines.get(path))
        return int(val)
    return float(val)


def _range(val, path, lines):
    if not isinstance(val, (list, tuple)) or len(val) != 2:
        raise ConfigError(f"expected [lo, hi], got {val!r}", path, lines.get(path))
    lo, hi = (_num(x, path, lines) for x in val)
    if not lo < hi:
        raise ConfigError(f"range needs lo < hi, got [{lo}, {hi}]", path, lines.get(path))
    return lo, hi


def _positive(x, path, lines):
    if not x > 0:
        raise ConfigError(f"must be > 0, got {x}", path, lines.get(path))
    return x


def _convert(block: str, key: str, val, lines):
    path = f"{block}.{key}"
    if key in ("s_in", "d") and block in ("sweep", "operating_diagram", "special_points"):
        return None if val is None else _range(val, path, lines)
    if block == "bifurcation" and key == "s_in":
        return _range(val, path, lines)
    if key == "grid":
        if not isinstance(val, (list, tuple)) or len(val) != 2:
            raise ConfigError(f"expected [nx, ny], got {val!r}", path, lines.get(path))
        nx, ny = (_num(x, path, lines, integer=True) for x in val)
        if nx < 2 or ny < 2:
            raise ConfigError("grid must be at least 2x2", path, lines.get(path))
        return nx, ny
    if key == "init":
        if not isinstance(val, (list, tuple)) or len(val) != 3:
            raise ConfigError(f"expected [S, u, v], got {val!r}", path, lines.get(path))
        init = tuple(_num(x, path, lines) for x in val)
        if min(init) < 0:
            raise ConfigError("initial state must be nonnegative", path, lines.get(path))
        return init
    if key == "tol":
        if not isinstance(val, dict):
            raise ConfigError("expected {abs: .., rel: ..}", path, lines.get(path))
        extra = set(val) - {"abs", "rel"}
        if extra:
            k = sorted(extra)[0]
            raise ConfigError(f"unknown key {k!r}", f"{path}.{k}", lines.get(f"{path}.{k}"))
        return Tolerance(**{k: _positive(_num(v, f"{path}.{k}", lines), f"{path}.{k}", lines)
                            for k, v in val.items()})
    if key == "pairs":
        if not isinstance(val, (list, tuple)) or not val:
            raise ConfigError("expected a nonempty list of [a, b]", path, lines.get(path))
        out = []
        for pr in val:
            if not isinstance(pr, (list, tuple)) or len(pr) != 2:
                raise ConfigError(f"expected [a, b], got {pr!r}", path, lines.get(path))
            a, b = (_num(x, path, lines) for x in pr)
            if a < 0 or b < 0:
                raise ConfigError("a and b must be >= 0", path, lines.get(path))
            out.append((a, b))
        return tuple(out)
    if key in ("cycles", "probe"):
        if not isinstance(val, bool):
            raise ConfigError(f"expected true/false, got {val!r}", path, lines.get(path))
        return val
    if key in ("samples", "curve_samples"):
        n = _num(val, path, lines, integer=True)
        if n < 2:
            raise ConfigError("must be >= 2", path, lines.get(path))
        return n
    x = _num(val, path, lines)
    if key in ("t_end", "period_cap"):
        return _positive(x, path, lines)
    if x < 0:
        raise ConfigError(f"must be >= 0, got {x}", path, lines.get(path))
    return x


def _block(name: str, raw, lines):
    cls = BLOCKS[name]
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", name, lines.get(name))
    known = {f.name for f in fields(cls)}
    for k in raw:
        if k not in known:
            raise ConfigError(f"unknown key {k!r}", f"{name}.{k}", lines.get(f"{name}.{k}"))
    return cls(**{k: _convert(name, k, v, lines) for k, v in raw.items()})


def _params(raw, lines) -> BioParams:
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping of parameter values", "params", lines.get("params"))
    for k in raw:
        if k not in PARAM_ORDER:
            raise ConfigError(f"unknown parameter {k!r}", f"params.{k}", lines.get(f"params.{k}"))
    missing = [k for k in PARAM_ORDER[:10] if k not in raw]
    if missing:
        raise ConfigError(f"missing parameters: {', '.join(missing)}", "params", lines.get("params"))
    vals = {k: _num(v, f"params.{k}", lines) for k, v in raw.items()}
    try:
        return BioParams(**vals)
    except DomainError as exc:
        name = str(exc).split()[0]
        raise ConfigError(str(exc), f"params.{name}", lines.get(f"params.{name}")) from None


def from_dict(doc: dict, lines: dict[str, int] | None = None) -> ScenarioConfig:
    lines = lines or {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping at top level")
    top = {"preset", "params", "output", "workers", *BLOCKS}
    for k in doc:
        if k not in top:
            raise ConfigError(f"unknown key {k!r}", str(k), lines.get(str(k)))
    preset, raw_params = doc.get("preset"), doc.get("params")
    if preset is not None and raw_params is not None:
        raise ConfigError("'preset' and 'params' are mutually exclusive", "preset", lines.get("preset"))
    if preset is None and raw_params is None:
        raise ConfigError("one of 'preset' or 'params' is required")
    params = preset_params(str(preset)) if preset is not None else _params(raw_params, lines)
    kw = {name: _block(name, doc.get(name), lines) for name in BLOCKS}
    workers = doc.get("workers")
    if workers is not None:
        workers = _num(workers, "workers", lines, integer=True)
        if workers < 1:
            raise ConfigError("workers must be >= 1", "workers", lines.get("workers"))
    output = doc.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ConfigError("output must be a nonempty path", "output", lines.get("output"))
    return ScenarioConfig(params=params, preset=preset, output=output, workers=workers, **kw)


def parse_config(text: str) -> ScenarioConfig:
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed document: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from None
    if doc is None:
        raise ConfigError("empty document")
    return from_dict(doc, _line_index(node))


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# --- emission -----------------------------------------------------------------------------

def _plain(x):
    if dataclasses.is_dataclass(x):
        return {f.name: _plain(getattr(x, f.name)) for f in fields(x)}
    if isinstance(x, tuple):
        return [_plain(v) for v in x]
    return x


def to_dict(cfg: ScenarioConfig) -> dict:
    doc: dict = {}
    if cfg.preset is not None:
        doc["preset"] = cfg.preset
    else:
        doc["params"] = cfg.params.to_dict()
    for name in BLOCKS:
        doc[name] = _plain(getattr(cfg, name))
    doc["output"] = cfg.output
    if cfg.workers is not None:
        doc["workers"] = cfg.workers
    return doc


class _Dumper(yaml.SafeDumper):
    pass


def _float_repr(dumper, value):
    if math.isnan(value) or math.isinf(value):
        return dumper.represent_scalar("tag:yaml.org,2002:float", ".nan" if math.isnan(value) else
                                       (".inf" if value > 0 else "-.inf"))
    text = f"{value:.17g}"
    mant, e, exp = text.partition("e")
    if "." not in mant:  # YAML 1.1 floats need a dot
        text = mant + ".0" + e + exp
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_Dumper.add_representer(float, _float_repr)


def emit_config(cfg: ScenarioConfig) -> str:
    return yaml.dump(to_dict(cfg), Dumper=_Dumper, sort_keys=False, default_flow_style=None)


__all__ = [
    "PRESETS", "ConfigError", "ScenarioConfig", "Tolerance", "SteadyStatesCfg", "SimulateCfg",
    "BifurcationCfg", "DiagramCfg", "SpecialPointsCfg", "SweepCfg", "preset_params",
    "parse_config", "load_config", "from_dict", "to_dict", "emit_config",
]
