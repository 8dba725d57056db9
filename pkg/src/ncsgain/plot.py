"""Deterministic SVG line charts of trace files.

No plotting library is involved so that identical input gives identical
bytes.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 50
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def render_svg(header: list[str], data: np.ndarray, columns: list[str] | None = None, title: str = "") -> str:
    """Plot ``columns`` (default: every ``x*`` column) against ``time``.

    Mode changes are drawn as dashed vertical lines and non-effective steps
    as short ticks under the plot area.
    """
    if data.shape[0] == 0:
        raise ValueError("nothing to plot")
    if columns is None:
        columns = [h for h in header if h.startswith("x") and h[1:].isdigit()]
    missing = [c for c in columns if c not in header]
    if missing:
        raise KeyError(f"columns not in trace: {', '.join(missing)}")
    if not columns:
        raise ValueError("no columns selected")

    t = data[:, header.index("time")]
    ys = np.column_stack([data[:, header.index(c)] for c in columns])
    t_lo, t_hi = float(t[0]), float(t[-1])
    if t_hi <= t_lo:
        t_hi = t_lo + 1.0
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (v - t_lo) / (t_hi - t_lo) * pw

    def py(v):
        return TOP + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    if y_lo < 0 < y_hi:
        out.append(
            f'<line class="zero" x1="{LEFT}" y1="{_fmt(py(0))}" x2="{LEFT + pw}" '
            f'y2="{_fmt(py(0))}" stroke="#bbb"/>'
        )
    for v in np.linspace(y_lo, y_hi, 5):
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(py(v) + 4)}" text-anchor="end" font-size="10">{v:.3g}</text>')
    for v in np.linspace(t_lo, t_hi, 6):
        out.append(
            f'<text x="{_fmt(px(v))}" y="{TOP + ph + 16}" text-anchor="middle" font-size="10">{v:.3g}</text>'
        )
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle" font-size="12">time [s]</text>')

    if "mode" in header:
        mode = data[:, header.index("mode")]
        for k in np.flatnonzero(mode[1:] != mode[:-1]) + 1:
            x = _fmt(px(t[k]))
            out.append(
                f'<line class="mode-change" x1="{x}" y1="{TOP}" x2="{x}" y2="{TOP + ph}" '
                f'stroke="#999" stroke-dasharray="4,3"/>'
            )
    if "effective" in header:
        eff = data[:, header.index("effective")]
        for k in np.flatnonzero(eff == 0):
            x = _fmt(px(t[k]))
            out.append(
                f'<line class="drop" x1="{x}" y1="{TOP + ph}" x2="{x}" y2="{TOP + ph + 6}" stroke="#e00"/>'
            )

    for j, name in enumerate(columns):
        colour = PALETTE[j % len(PALETTE)]
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(t, ys[:, j]))
        out.append(
            f'<polyline class="state" data-column="{escape(name)}" fill="none" '
            f'stroke="{colour}" stroke-width="1.5" points="{pts}"/>'
        )
        out.append(
            f'<text x="{LEFT + pw - 10}" y="{TOP + 16 + 14 * j}" text-anchor="end" '
            f'font-size="12" fill="{colour}">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
