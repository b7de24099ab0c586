from __future__ import annotations

import pytest

from flocstat.config import (
    PRESETS,
    ConfigError,
    ScenarioConfig,
    emit_config,
    parse_config,
    preset_params,
)
from flocstat.model import BioParams


def test_preset_line3():
    p = parse_config("preset: line3\n").params
    assert p == BioParams(m1=5, k1=2, m2=5, k2=3, a=4, b=2, alpha=1, beta=1, m_u=3.25, m_v=1,
                          y_u=1, y_v=1)


def test_preset_line1():
    p = parse_config("preset: line1\n").params
    assert p == BioParams(m1=4.5, k1=1, m2=3, k2=2.7, a=2, b=3, alpha=0.8, beta=0.5, m_u=0.2,
                          m_v=0.25, y_u=1, y_v=1)


def test_no_line4():
    assert set(PRESETS) == {"line1", "line2", "line3", "line5"}
    with pytest.raises(ConfigError, match="preset"):
        parse_config("preset: line4\n")


def test_negative_k1_names_field():
    doc = ("params: {m1: 5, k1: -2, m2: 5, k2: 3, a: 4, b: 2, alpha: 1, beta: 1,"
           " m_u: 3.25, m_v: 1}\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    assert exc.value.field == "params.k1" and exc.value.line == 1


def test_explicit_params_default_yields():
    doc = "params: {m1: 5, k1: 2, m2: 5, k2: 3, a: 4, b: 2, alpha: 1, beta: 1, m_u: 3.25, m_v: 1}\n"
    assert parse_config(doc).params == preset_params("line3")


def test_mutually_exclusive():
    doc = "preset: line3\nparams: {m1: 5}\n"
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config(doc)


def test_requires_params():
    with pytest.raises(ConfigError):
        parse_config("output: x\n")


def test_unknown_key_with_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("preset: line3\nsimulate:\n  s_in: 3\n  t_ned: 4\n")
    assert exc.value.field == "simulate.t_ned" and exc.value.line == 4


def test_unknown_top_level():
    with pytest.raises(ConfigError, match="bogus"):
        parse_config("preset: line3\nbogus: 1\n")


def test_missing_param():
    with pytest.raises(ConfigError, match="missing"):
        parse_config("params: {m1: 5}\n")


@pytest.mark.parametrize("doc,field", [
    ("preset: line3\nbifurcation: {s_in: [5, 1]}\n", "bifurcation.s_in"),
    ("preset: line3\nsimulate: {tol: {abs: -1}}\n", "simulate.tol.abs"),
    ("preset: line3\nsimulate: {tol: {rel: 0}}\n", "simulate.tol.rel"),
    ("preset: line3\noperating_diagram: {grid: [1, 5]}\n", "operating_diagram.grid"),
    ("preset: line3\nsimulate: {t_end: 0}\n", "simulate.t_end"),
    ("preset: line3\nsimulate: {init: [1, -1, 1]}\n", "simulate.init"),
    ("preset: line3\nsweep: {pairs: [[1, -2]]}\n", "sweep.pairs"),
    ("preset: line3\nbifurcation: {cycles: 3}\n", "bifurcation.cycles"),
    ("preset: line3\nworkers: 0\n", "workers"),
])
def test_invariants(doc, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(doc)
    assert exc.value.field == field


def test_malformed():
    with pytest.raises(ConfigError, match="malformed") as exc:
        parse_config("preset: [line3\n")
    assert exc.value.line is not None


def test_empty():
    with pytest.raises(ConfigError):
        parse_config("")


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_round_trip_presets(name):
    cfg = ScenarioConfig(params=preset_params(name), preset=name)
    assert parse_config(emit_config(cfg)) == cfg


def test_round_trip_explicit():
    p = preset_params("line2").replace(a=0.1 + 0.2, m_u=1e-10)
    cfg = ScenarioConfig(params=p, workers=3, output="x/y")
    back = parse_config(emit_config(cfg))
    assert back == cfg
    assert back.params.a == 0.1 + 0.2  # bit-exact


def test_emitted_digits():
    cfg = ScenarioConfig(params=preset_params("line1"))
    text = emit_config(cfg)
    assert "0.80000000000000004" in text  # alpha, 17 significant digits
