from __future__ import annotations

import json
import re

import pytest

from flocstat.artifacts import extract_config
from flocstat.cli import main
from flocstat.config import load_config


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_steady_states(tmp_path, capsys):
    code, out, _ = run(["steady-states", "--preset", "line3", "--sin", "5", "--d", "0.1",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    names = [(s["name"], s["verdict"]) for s in doc["steady_states"]]
    assert names == [("E0", "U"), ("E1^1", "U")]
    assert all(len(s["eigenvalues"]) == 3 for s in doc["steady_states"])
    assert doc["region"] == "I3"
    assert (tmp_path / "steady_states.json").read_text() == out


def test_operating_diagram_line1(tmp_path, capsys):
    code, out, _ = run(["operating-diagram", "--preset", "line1", "--sin", "0:8", "--d", "0:5",
                        "--grid", "100x100", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert json.loads(out)["regions"] == ["I0", "I1"]
    svg = (tmp_path / "diagram.svg").read_text()
    assert 'class="I0"' in svg and 'class="I1"' in svg and 'class="I2"' not in svg
    assert 'class="GammaU"' in svg
    grid = (tmp_path / "grid.csv").read_text().splitlines()
    body = [ln for ln in grid if not ln.startswith("#")]
    assert body[0] == "S_in,D,region" and len(body) == 1 + 100 * 100
    curves = [ln for ln in (tmp_path / "curves.csv").read_text().splitlines() if not ln.startswith("#")]
    assert curves[0] == "curve,S_in,D"


def test_bifurcation_no_cycles(tmp_path, capsys):
    code, out, _ = run(["bifurcation", "--preset", "line3", "--d", "0.1", "--sin", "0:10",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    events = json.loads((tmp_path / "events.json").read_text())["events"]
    assert [e["type"] for e in events] == ["LP", "H", "BP", "H"]
    branches = (tmp_path / "branches.csv").read_text()
    assert "\nS_in,S,kind,stability\n" in branches


@pytest.mark.slow
def test_bifurcation_cycles(tmp_path, capsys):
    code, _, _ = run(["bifurcation", "--preset", "line3", "--d", "0.1", "--sin", "0:10", "--cycles",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    events = json.loads((tmp_path / "events.json").read_text())["events"]
    assert [e["type"] for e in events] == ["LP", "H", "Hom", "Hom", "BP", "H"]
    expect = [3.837, 3.842, 3.8477, 4.03468, 4.061, 8.179]
    tol = [2e-3, 2e-3, 5e-3, 5e-3, 2e-3, 2e-3]
    for e, x, t in zip(events, expect, tol):
        assert abs(e["S_in"] - x) <= t


def test_simulate_and_probe(tmp_path, capsys):
    code, out, _ = run(["simulate", "--preset", "line3", "--sin", "4.5", "--d", "0.1",
                        "--init", "3,0.05,0.05", "--t-end", "4000", "--probe",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = [ln for ln in (tmp_path / "trajectory.csv").read_text().splitlines()
            if not ln.startswith("#")]
    assert rows[0] == "t,S,u,v" and len(rows) == 2001
    assert json.loads((tmp_path / "attractor.json").read_text())["attractor"] == "LimitCycle"


def test_special_points(tmp_path, capsys):
    code, out, _ = run(["special-points", "--preset", "line3", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert out.splitlines()[0] == "kind,S_in,D,flag"
    assert any(ln.startswith("Cusp,3.819") for ln in out.splitlines())


def test_sweep(tmp_path, capsys):
    code, out, _ = run(["sweep", "--preset", "line3", "--pairs", "4,2;0,0", "--grid", "20x20",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "a4_b2" / "diagram.svg").exists()
    assert (tmp_path / "a0_b0" / "grid.csv").exists()
    members = json.loads((tmp_path / "sweep.json").read_text())["members"]
    assert [m["a"] for m in members] == [4, 0]


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("preset: line3\nsteady_states: {s_in: 9.0, d: 0.1}\n")
    code, out, _ = run(["steady-states", "--config", str(cfg), "--sin", "3",
                        "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["operating_point"]["S_in"] == 3.0
    assert [s["name"] for s in doc["steady_states"]] == ["E0"]


def test_param_override(tmp_path, capsys):
    code, out, _ = run(["steady-states", "--preset", "line3", "--param", "a=0", "--sin", "9",
                        "--d", "0.1", "--out", str(tmp_path)], capsys)
    assert code == 0
    emb = extract_config(tmp_path / "steady_states.json")
    assert emb.preset is None and emb.params.a == 0.0


@pytest.mark.parametrize("argv,field", [
    (["steady-states", "--preset", "line3", "--param", "k1=-1"], "params.k1"),
    (["steady-states", "--preset", "line3", "--sin", "abc"], "s_in"),
    (["operating-diagram", "--preset", "line3", "--grid", "10by10"], "grid"),
    (["steady-states"], "preset"),
])
def test_config_errors(argv, field, capsys, tmp_path):
    code, out, err = run(argv + ["--out", str(tmp_path)], capsys)
    assert code == 2
    doc = json.loads(err)
    assert doc["exit_code"] == 2 and doc["field"] == field


def test_usage_error_is_json(capsys):
    code, _, err = run(["steady-states", "--bogus"], capsys)
    assert code == 2 and json.loads(err)["error"] == "ConfigError"


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(["steady-states", "--config", str(tmp_path / "nope.yaml")], capsys)
    assert code == 2 and "nope.yaml" in json.loads(err)["message"]


def test_numeric_failure(capsys, tmp_path):
    # initial state far outside the box: divergence
    code, _, err = run(["simulate", "--preset", "line3", "--sin", "1", "--d", "0.1",
                        "--init", "500,1,1", "--out", str(tmp_path)], capsys)
    assert code == 3 and json.loads(err)["error"] == "DivergenceError"


def test_inconclusive(capsys, tmp_path, monkeypatch):
    import flocstat.cli as cli
    from flocstat.dynamics import InconclusiveError

    def boom(*a, **k):
        raise InconclusiveError("bracket predicate constant")

    monkeypatch.setattr(cli, "bifurcation_1d", boom)
    code, _, err = run(["bifurcation", "--preset", "line3", "--out", str(tmp_path)], capsys)
    assert code == 4 and json.loads(err)["exit_code"] == 4


def test_determinism_and_embedded_config(tmp_path, capsys):
    argv = ["operating-diagram", "--preset", "line3", "--grid", "30x20", "--curve-samples", "50"]
    assert run(argv + ["--out", str(tmp_path / "a")], capsys)[0] == 0
    assert run(argv + ["--out", str(tmp_path / "b")], capsys)[0] == 0
    for name in ("grid.csv", "curves.csv", "special_points.csv"):
        a, b = (tmp_path / "a" / name).read_text(), (tmp_path / "b" / name).read_text()
        # only the output path differs between the two runs
        assert a.replace("/a", "") == b.replace("/b", "")
    strip = re.compile(r"<!-- build:.*?-->")
    sa = strip.sub("", (tmp_path / "a" / "diagram.svg").read_text())
    sb = strip.sub("", (tmp_path / "b" / "diagram.svg").read_text())
    assert sa.replace("/a", "") == sb.replace("/b", "")

    produced = extract_config(tmp_path / "a" / "grid.csv")
    for name in ("curves.csv", "special_points.csv", "diagram.svg", "summary.json"):
        assert extract_config(tmp_path / "a" / name) == produced
    assert produced.operating_diagram.grid == (30, 20)
    # and the embedded block is a loadable file of its own
    text = (tmp_path / "a" / "summary.json").read_text()
    (tmp_path / "replay.yaml").write_text(json.loads(text)["config"])
    assert load_config(tmp_path / "replay.yaml") == produced


def test_byte_identical_same_path(tmp_path, capsys):
    argv = ["steady-states", "--preset", "line2", "--sin", "2.5", "--d", "0.142",
            "--out", str(tmp_path)]
    run(argv, capsys)
    first = (tmp_path / "steady_states.json").read_bytes()
    run(argv, capsys)
    assert (tmp_path / "steady_states.json").read_bytes() == first
