"""Static SVG figures from CSV reports.

Three kinds are supported:

* ``bands``: truth and mean lines with shaded reference and model bands, optional data scatter
* ``w1``: Wasserstein distance against x, one line per (loss kind, lambda)
* ``runs``: one trajectory per training run plus their mean (a file without a ``run`` column is one run)

Output depends only on the input rows, so identical reports give identical files.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

BAND_COLUMNS = ("x", "truth", "ref_mean", "ref_lo", "ref_hi", "model_mean", "model_lo", "model_hi")
SCHEMAS = {
    "bands": ("x", "truth", "ref_mean", "ref_lo", "ref_hi"),
    "w1": ("x", "lambda", "loss_kind", "component", "w1"),
    "runs": ("epoch",),  # plus the value column; "run" is optional and defaults to 0
}

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=150, top=40, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


class PlotSchemaError(ValueError):
    pass


def read_rows(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return list(reader.fieldnames or []), list(reader)


def check_schema(kind: str, columns: Sequence[str], value: Optional[str] = None) -> None:
    if kind not in SCHEMAS:
        raise PlotSchemaError(f"unknown plot kind {kind!r}; expected one of {', '.join(SCHEMAS)}")
    if kind == "runs" and not value:
        raise PlotSchemaError("runs plot needs a value column; expected columns [run,] epoch, <value>")
    expected = list(SCHEMAS[kind]) + ([value] if kind == "runs" else [])
    missing = [c for c in expected if c not in columns]
    if missing:
        raise PlotSchemaError(
            f"{kind} plot expects columns {', '.join(expected)}; missing {', '.join(missing)}"
        )


class _Frame:
    """Maps data coordinates into the plotting area."""

    def __init__(self, xs, ys):
        xs = np.asarray([v for v in xs if np.isfinite(v)], dtype=float)
        ys = np.asarray([v for v in ys if np.isfinite(v)], dtype=float)
        self.x0, self.x1 = _span(xs)
        self.y0, self.y1 = _span(ys)
        self.left, self.top = MARGIN["left"], MARGIN["top"]
        self.w = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(self, x: float) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, y: float) -> float:
        return self.top + self.h - (y - self.y0) / (self.y1 - self.y0) * self.h

    def points(self, xs, ys) -> str:
        return " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(y))


def _span(v: np.ndarray) -> tuple[float, float]:
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12 * max(1.0, abs(lo)):
        pad = max(abs(lo) * 0.05, 0.5)
        return lo - pad, hi + pad
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _axes(fr: _Frame, title: str, xlabel: str, ylabel: str) -> list[str]:
    out = [
        f'<rect x="{fr.left}" y="{fr.top}" width="{fr.w}" height="{fr.h}" fill="none" stroke="#444"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{fr.left + fr.w / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{fr.top + fr.h / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {fr.top + fr.h / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for t in np.linspace(fr.x0, fr.x1, 5):
        x = fr.px(t)
        out.append(f'<line x1="{x:.2f}" y1="{fr.top + fr.h}" x2="{x:.2f}" y2="{fr.top + fr.h + 5}" stroke="#444"/>')
        out.append(f'<text x="{x:.2f}" y="{fr.top + fr.h + 18}" text-anchor="middle" font-size="10">{_fmt(t)}</text>')
    for t in np.linspace(fr.y0, fr.y1, 5):
        y = fr.py(t)
        out.append(f'<line x1="{fr.left - 5}" y1="{y:.2f}" x2="{fr.left}" y2="{y:.2f}" stroke="#444"/>')
        out.append(f'<text x="{fr.left - 8}" y="{y + 3:.2f}" text-anchor="end" font-size="10">{_fmt(t)}</text>')
    return out


def _legend(entries: list[tuple[str, str]]) -> list[str]:
    out, x = [], WIDTH - MARGIN["right"] + 12
    for i, (label, color) in enumerate(entries):
        y = MARGIN["top"] + 14 * i + 6
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 16}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x + 20}" y="{y + 4}" font-size="10">{escape(label)}</text>')
    return out


def _svg(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">'
    )
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>', *body, "</svg>"]) + "\n"


def _band_polygon(fr: _Frame, xs, lo, hi, color: str, cls: str) -> str:
    keep = [i for i in range(len(xs)) if np.isfinite(lo[i]) and np.isfinite(hi[i])]
    upper = [(xs[i], hi[i]) for i in keep]
    lower = [(xs[i], lo[i]) for i in reversed(keep)]
    pts = " ".join(f"{fr.px(x):.2f},{fr.py(y):.2f}" for x, y in upper + lower)
    return f'<polygon class="{cls}" points="{pts}" fill="{color}" fill-opacity="0.3" stroke="none"/>'


def _col(rows: list[dict], name: str) -> np.ndarray:
    return np.array([float(r[name]) if r.get(name) not in (None, "") else np.nan for r in rows])


def bands_svg(rows: list[dict], title: str = "", data=None) -> str:
    xs = _col(rows, "x")
    cols = {c: _col(rows, c) for c in BAND_COLUMNS[1:]}
    has_model = np.any(np.isfinite(cols["model_mean"]))
    ys = np.concatenate([v for v in cols.values()] + ([np.asarray(data[1], float)] if data is not None else []))
    allx = np.concatenate([xs] + ([np.asarray(data[0], float)] if data is not None else []))
    fr = _Frame(allx, ys)
    body = _axes(fr, title, "x", "parameter")
    body.append(_band_polygon(fr, xs, cols["ref_lo"], cols["ref_hi"], "#999999", "reference-band"))
    legend = [("truth", "#2ca02c"), ("reference mean", "#1f77b4")]
    if has_model:
        body.append(_band_polygon(fr, xs, cols["model_lo"], cols["model_hi"], "#9467bd", "model-band"))
        legend.append(("model mean", "#9467bd"))
    body.append(f'<polyline class="truth" points="{fr.points(xs, cols["truth"])}" fill="none" stroke="#2ca02c" stroke-width="2"/>')
    body.append(f'<polyline class="reference-mean" points="{fr.points(xs, cols["ref_mean"])}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
    if has_model:
        body.append(f'<polyline class="model-mean" points="{fr.points(xs, cols["model_mean"])}" fill="none" stroke="#9467bd" stroke-width="1.5" stroke-dasharray="4 2"/>')
    if data is not None:
        for x, y in zip(*data):
            body.append(f'<circle class="data" cx="{fr.px(float(x)):.2f}" cy="{fr.py(float(y)):.2f}" r="1.5" fill="black"/>')
    return _svg(body + _legend(legend))


def w1_svg(rows: list[dict], title: str = "") -> str:
    series = defaultdict(list)
    for r in rows:
        series[(r["loss_kind"], float(r["lambda"]), r["component"])].append((float(r["x"]), float(r["w1"])))
    fr = _Frame([float(r["x"]) for r in rows], [float(r["w1"]) for r in rows])
    body = _axes(fr, title, "x", "W1")
    legend = []
    for i, key in enumerate(sorted(series)):
        pts = sorted(series[key])
        color = PALETTE[i % len(PALETTE)]
        label = f"{key[0]} lambda={key[1]:g} {key[2]}"
        dash = ' stroke-dasharray="5 3"' if key[0] == "reference_fit" else ""
        body.append(
            f'<polyline class="series" points="{fr.points([p[0] for p in pts], [p[1] for p in pts])}" '
            f'fill="none" stroke="{color}" stroke-width="1.5"{dash}/>'
        )
        legend.append((label, color))
    return _svg(body + _legend(legend))


def runs_svg(rows: list[dict], value: str, title: str = "") -> str:
    by_run = defaultdict(list)
    for r in rows:
        by_run[int(r.get("run") or 0)].append((int(r["epoch"]), float(r[value])))
    fr = _Frame([float(r["epoch"]) for r in rows], [float(r[value]) for r in rows])
    body = _axes(fr, title, "epoch", value)
    for run in sorted(by_run):
        pts = sorted(by_run[run])
        body.append(
            f'<polyline class="run" data-run="{run}" points="{fr.points([p[0] for p in pts], [p[1] for p in pts])}" '
            f'fill="none" stroke="#1f77b4" stroke-opacity="0.35" stroke-width="1"/>'
        )
    per_epoch = defaultdict(list)
    for r in rows:
        per_epoch[int(r["epoch"])].append(float(r[value]))
    epochs = sorted(per_epoch)
    means = [float(np.mean(per_epoch[e])) for e in epochs]
    body.append(f'<polyline class="mean" points="{fr.points(epochs, means)}" fill="none" stroke="#d62728" stroke-width="2.5"/>')
    return _svg(body + _legend([("single run", "#1f77b4"), ("mean over runs", "#d62728")]))


def render(kind: str, columns: Sequence[str], rows: list[dict], title: str = "", data=None,
           value: Optional[str] = None) -> str:
    check_schema(kind, columns, value)
    if kind == "bands":
        return bands_svg(rows, title, data)
    if kind == "w1":
        return w1_svg(rows, title)
    return runs_svg(rows, value, title)


def plot_file(csv_path, kind: str, svg_path, title: str = "", data=None, value: Optional[str] = None) -> Path:
    columns, rows = read_rows(csv_path)
    svg = render(kind, columns, rows, title, data, value)
    svg_path = Path(svg_path)
    svg_path.write_text(svg)
    return svg_path
