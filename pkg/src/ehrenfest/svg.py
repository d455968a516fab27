"""Minimal SVG line charts built from the CSV files a run writes."""
from __future__ import annotations

import csv
from html import escape
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

__all__ = ["read_csv_columns", "line_chart", "plots_from_csv"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
_W, _H = 640, 400
_M = dict(left=80, right=20, top=40, bottom=50)


def read_csv_columns(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def line_chart(x: Sequence[float], series: Dict[str, Sequence[float]], title: str,
               xlabel: str, ylabel: str) -> str:
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    x0, x1 = (float(np.min(x)), float(np.max(x))) if x.size else (0.0, 1.0)
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        pad = abs(y0) * 0.05 or 1.0
        y0, y1 = y0 - pad, y1 + pad
    pw = _W - _M["left"] - _M["right"]
    ph = _H - _M["top"] - _M["bottom"]
    sx = lambda v: _M["left"] + (v - x0) / (x1 - x0) * pw
    sy = lambda v: _M["top"] + (1.0 - (v - y0) / (y1 - y0)) * ph

    out: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{_W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<rect x="{_M["left"]}" y="{_M["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        out.append(f'<text x="{sx(v):.1f}" y="{_H - _M["bottom"] + 16}" text-anchor="middle" '
                   f'font-size="11">{v:.4g}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<text x="{_M["left"] - 6}" y="{sy(v) + 4:.1f}" text-anchor="end" '
                   f'font-size="11">{v:.4g}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 10}" text-anchor="middle" font-size="13">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{_H / 2}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 16 {_H / 2})">{escape(ylabel)}</text>')
    for k, (name, y) in enumerate(ys.items()):
        ok = np.isfinite(y) & np.isfinite(x)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
        color = _COLORS[k % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{_M["left"] + 8}" y="{_M["top"] + 16 + 14 * k}" font-size="11" '
                   f'fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plots_from_csv(csv_path, directory, stem: str = "") -> List[Path]:
    """Energy drift, Casimir drift and mean-orbit charts from a trajectory CSV."""
    cols = read_csv_columns(csv_path)
    directory = Path(directory)
    prefix = f"{stem}_" if stem else ""
    t = cols["t"]
    written = []

    def drift(v):
        scale = abs(v[0]) if v.size and v[0] != 0 else 1.0
        return (v - v[0]) / scale

    charts = []
    if "energy" in cols:
        charts.append(("energy", {"relative energy drift": drift(cols["energy"])},
                       "Energy drift", "t", "(E - E0) / |E0|"))
    cas = {k: drift(cols[k]) for k in ("casimir_1", "casimir_det") if k in cols}
    if cas:
        charts.append(("casimirs", cas, "Casimir drift", "t", "relative change"))
    if "mass" in cols:
        charts.append(("mass", {"mass - 1": cols["mass"] - 1.0}, "Mass error", "t", "mass - 1"))
    for name, series, title, xl, yl in charts:
        path = directory / f"{prefix}{name}.svg"
        path.write_text(line_chart(t, series, title, xl, yl))
        written.append(path)
    if "q" in cols and "p" in cols:
        path = directory / f"{prefix}orbit.svg"
        path.write_text(line_chart(cols["q"], {"mean orbit": cols["p"]}, "Mean phase-space orbit",
                                   "q", "p"))
        written.append(path)
    return written
