"""Artifact serialization: JSON, CSV and layered SVG.

Every file carries the resolved scenario as YAML so a run can be replayed:
CSV as ``# ``-prefixed header lines, JSON under the ``config`` key, SVG in a
``<metadata>`` block.  Floats are written with 17 significant digits.
"""
from __future__ import annotations

import math
import platform
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from ._accel import NUMBA_ENABLED
from .config import ScenarioConfig, emit_config, parse_config
from .diagrams import CURVE_COLORS, REGION_COLORS, OperatingDiagram

CONFIG_MARK = "config:"


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


# --- JSON ------------------------------------------------------------------------

def _json(obj, indent: int) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if obj is None or (isinstance(obj, float) and math.isnan(obj)):
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else f'"{fmt(obj)}"'
    if isinstance(obj, str):
        return _json_str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_json_str(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_json(v, 0) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json_str(s: str) -> str:
    import json

    return json.dumps(s, ensure_ascii=False)


def dumps_json(obj) -> str:
    return _json(obj, 0) + "\n"


def write_json(path, payload: dict, cfg: ScenarioConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json({"config": emit_config(cfg), **payload}))
    return path


# --- CSV ---------------------------------------------------------------------------

def config_header(cfg: ScenarioConfig) -> list[str]:
    return [CONFIG_MARK] + emit_config(cfg).rstrip("\n").split("\n")


def write_csv(path, header: str, rows, cfg: ScenarioConfig | None = None,
              notes: list[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {n}" for n in (notes or [])]
    if cfg is not None:
        lines += [f"# {h}" for h in config_header(cfg)]
    lines.append(header)
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def diagram_grid_rows(od: OperatingDiagram):
    for j, d in enumerate(od.d):
        for i, s in enumerate(od.s_in):
            yield s, d, str(od.labels[j, i])


def curve_rows(od: OperatingDiagram):
    for c in od.curves:
        for s, d in c.points:
            if math.isfinite(s) and math.isfinite(d):
                yield c.identity.value, s, d


def special_rows(points):
    for sp in points:
        yield sp.kind, sp.location[0], sp.location[1], sp.flag


def write_diagram_csvs(od: OperatingDiagram, out_dir, cfg: ScenarioConfig) -> list[Path]:
    out = Path(out_dir)
    return [
        write_csv(out / "grid.csv", "S_in,D,region", diagram_grid_rows(od), cfg),
        write_csv(out / "curves.csv", "curve,S_in,D", curve_rows(od), cfg),
        write_csv(out / "special_points.csv", "kind,S_in,D,flag", special_rows(od.special), cfg),
    ]


# --- SVG -----------------------------------------------------------------------------

W, H = 640.0, 480.0
ML, MR, MT, MB = 70.0, 130.0, 20.0, 50.0


def _sx(s, od):
    s0, s1 = od.s_in_range
    return ML + (s - s0) / (s1 - s0) * W


def _sy(d, od):
    d0, d1 = od.d_range
    return MT + (1.0 - (d - d0) / (d1 - d0)) * H


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n + 1)


def render_svg(od: OperatingDiagram, cfg: ScenarioConfig | None = None, title: str = "") -> str:
    c = lambda x: f"{x:.3f}"  # noqa: E731 - pixel coordinates
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<!-- build: flocstat {__version__}; python {platform.python_version()}; '
        f'numba {"on" if NUMBA_ENABLED else "off"} -->',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{c(ML + W + MR)}" '
        f'height="{c(MT + H + MB)}" font-family="sans-serif" font-size="12">',
    ]
    if cfg is not None:
        out.append(f"<metadata><![CDATA[\n{emit_config(cfg)}]]></metadata>")
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<defs><clipPath id="plot"><rect x="{c(ML)}" y="{c(MT)}" width="{c(W)}" '
               f'height="{c(H)}"/></clipPath></defs>')

    # region fill: one rectangle per run of equal labels in a row
    nx, ny = od.s_in.size, od.d.size
    cw, ch = W / nx, H / ny
    out.append('<g id="regions" shape-rendering="crispEdges">')
    for j in range(ny):
        row = od.labels[j]
        y = MT + (ny - 1 - j) * ch
        i = 0
        while i < nx:
            k = i
            while k + 1 < nx and row[k + 1] == row[i]:
                k += 1
            col = REGION_COLORS.get(str(row[i]), "#ffffff")
            out.append(f'<rect x="{c(ML + i * cw)}" y="{c(y)}" width="{c((k - i + 1) * cw)}" '
                       f'height="{c(ch)}" fill="{col}" class="{row[i]}"/>')
            i = k + 1
    out.append("</g>")

    out.append('<g id="curves" clip-path="url(#plot)" fill="none" stroke-width="1.6">')
    for cv in od.curves:
        pts = cv.points
        ok = np.isfinite(pts).all(axis=1)
        # split into finite segments
        segs, cur = [], []
        for good, (s, d) in zip(ok, pts):
            if good:
                cur.append(f"{c(_sx(s, od))},{c(_sy(d, od))}")
            elif cur:
                segs.append(cur)
                cur = []
        if cur:
            segs.append(cur)
        col = CURVE_COLORS.get(cv.identity.value, "#000000")
        dash = ' stroke-dasharray="6,3"' if cv.identity.value == "GammaBP" else ""
        for seg in segs:
            if len(seg) > 1:
                out.append(f'<polyline class="{cv.identity.value}" stroke="{col}"{dash} '
                           f'points="{" ".join(seg)}"/>')
    out.append("</g>")

    out.append('<g id="special">')
    for sp in od.special:
        s, d = sp.location
        x, y = _sx(s, od), _sy(d, od)
        if not (ML - 1 <= x <= ML + W + 1 and MT - 1 <= y <= MT + H + 1):
            continue
        tip = f"{sp.kind} ({fmt(s)}, {fmt(d)}) {sp.flag}".strip()
        out.append(f'<circle cx="{c(x)}" cy="{c(y)}" r="4" fill="#000000" stroke="#ffffff">'
                   f"<title>{escape(tip)}</title></circle>")
    out.append("</g>")

    # axes and ticks
    out.append('<g id="axes" stroke="#000000" fill="none">')
    out.append(f'<rect x="{c(ML)}" y="{c(MT)}" width="{c(W)}" height="{c(H)}"/>')
    out.append("</g>")
    out.append('<g id="labels" fill="#000000">')
    for t in _ticks(*od.s_in_range):
        x = _sx(t, od)
        out.append(f'<line x1="{c(x)}" y1="{c(MT + H)}" x2="{c(x)}" y2="{c(MT + H + 5)}" '
                   'stroke="#000000"/>')
        out.append(f'<text x="{c(x)}" y="{c(MT + H + 18)}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(*od.d_range):
        y = _sy(t, od)
        out.append(f'<line x1="{c(ML - 5)}" y1="{c(y)}" x2="{c(ML)}" y2="{c(y)}" stroke="#000000"/>')
        out.append(f'<text x="{c(ML - 8)}" y="{c(y + 4)}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{c(ML + W / 2)}" y="{c(MT + H + 40)}" text-anchor="middle">S_in</text>')
    out.append(f'<text x="{c(18)}" y="{c(MT + H / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 18 {c(MT + H / 2)})">D</text>')
    # legend
    lx, ly = ML + W + 15, MT + 10
    for k, tag in enumerate(sorted(od.label_set)):
        out.append(f'<rect x="{c(lx)}" y="{c(ly + 18 * k)}" width="12" height="12" '
                   f'fill="{REGION_COLORS.get(tag, "#ffffff")}" stroke="#000000"/>')
        out.append(f'<text x="{c(lx + 18)}" y="{c(ly + 18 * k + 10)}">{tag}</text>')
    ly += 18 * (len(od.label_set) + 1)
    seen = []
    for cv in od.curves:
        if cv.identity.value not in seen and np.isfinite(cv.points).all(axis=1).any():
            seen.append(cv.identity.value)
    for k, name in enumerate(seen):
        y = ly + 18 * k + 6
        out.append(f'<line x1="{c(lx)}" y1="{c(y)}" x2="{c(lx + 12)}" y2="{c(y)}" '
                   f'stroke="{CURVE_COLORS.get(name, "#000000")}" stroke-width="2"/>')
        out.append(f'<text x="{c(lx + 18)}" y="{c(y + 4)}">{name}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, od: OperatingDiagram, cfg: ScenarioConfig | None = None, title: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_svg(od, cfg, title))
    return path


# --- reading the embedded config back ------------------------------------------------

def extract_config(path) -> ScenarioConfig:
    """Recover the scenario embedded in a CSV, JSON or SVG artifact."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        import json

        return parse_config(json.loads(text)["config"])
    if path.suffix == ".svg":
        start = text.index("<metadata><![CDATA[\n") + len("<metadata><![CDATA[\n")
        return parse_config(text[start:text.index("]]></metadata>", start)])
    body, inside = [], False
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        content = line[2:] if line.startswith("# ") else line[1:]
        if inside:
            body.append(content)
        elif content == CONFIG_MARK:
            inside = True
    if not inside:
        raise ValueError(f"{path} carries no embedded config")
    return parse_config("\n".join(body) + "\n")


__all__ = [
    "fmt", "dumps_json", "write_json", "write_csv", "write_diagram_csvs", "render_svg",
    "write_svg", "extract_config", "config_header",
]
