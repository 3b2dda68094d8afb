"""Minimal static SVG renderings (waterfall and convergence traces).

Plain path/rect/text primitives only; output is byte-stable for equal input.
"""
from __future__ import annotations

from html import escape

import numpy as np
import pandas as pd

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _num(v: float) -> str:
    return f"{v:.4g}"


def _svg(width, height, body) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def waterfall_svg(rows: pd.DataFrame, title: str = "", width: int = 640) -> str:
    """Horizontal waterfall from :func:`storagemix.explain.waterfall_data` rows."""
    n = len(rows)
    bar_h, left, right, top = 20, 140, 30, 40
    height = top + bar_h * max(n, 1) + 40
    lo = min([*rows["start"], *rows["end"]]) if n else 0.0
    hi = max([*rows["start"], *rows["end"]]) if n else 1.0
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    scale = (width - left - right) / (hi - lo)
    xpos = lambda v: left + (v - lo) * scale  # noqa: E731
    body = [f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>']
    for r, row in enumerate(rows.itertuples(index=False)):
        y = top + r * bar_h
        x0, x1 = sorted((xpos(row.start), xpos(row.end)))
        color = "#d62728" if row.phi >= 0 else "#1f77b4"
        body.append(f'<rect x="{_fmt(x0)}" y="{y + 3}" width="{_fmt(max(x1 - x0, 0.5))}" '
                    f'height="{bar_h - 6}" fill="{color}"/>')
        label = f"{row.feature} = {_num(row.value)}"
        body.append(f'<text x="{left - 6}" y="{y + bar_h - 6}" text-anchor="end">{escape(label)}</text>')
        sign = "+" if row.phi >= 0 else ""
        body.append(f'<text x="{_fmt(x1 + 4)}" y="{y + bar_h - 6}">{sign}{_num(row.phi)}</text>')
    axis_y = top + bar_h * max(n, 1) + 10
    body.append(f'<line x1="{left}" y1="{axis_y}" x2="{width - right}" y2="{axis_y}" stroke="black"/>')
    if n:
        base, final = rows["start"].iloc[0], rows["end"].iloc[-1]
        body.append(f'<text x="{_fmt(xpos(base))}" y="{axis_y + 14}" text-anchor="middle">'
                    f'E[f] = {_num(base)}</text>')
        body.append(f'<text x="{_fmt(xpos(final))}" y="{axis_y + 28}" text-anchor="middle">'
                    f'f(x) = {_num(final)}</text>')
    return _svg(width, height, body)


def trace_svg(trace: pd.DataFrame, columns, title: str = "", width: int = 640, height: int = 360) -> str:
    """One min-max normalised line per column against ``generation``."""
    left, right, top, bottom = 50, 160, 30, 40
    gens = trace["generation"].to_numpy(dtype=float)
    gspan = max(gens.max() - gens.min(), 1.0)
    pw, ph = width - left - right, height - top - bottom
    body = [f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
            f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for c, col in enumerate(columns):
        y = trace[col].to_numpy(dtype=float)
        span = y.max() - y.min()
        norm = (y - y.min()) / span if span > 0 else np.zeros_like(y)
        pts = " ".join(f"{_fmt(left + (g - gens.min()) / gspan * pw)},{_fmt(top + (1 - v) * ph)}"
                       for g, v in zip(gens, norm))
        color = _PALETTE[c % len(_PALETTE)]
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(f'<text x="{left + pw + 8}" y="{top + 14 + 16 * c}" fill="{color}">{escape(col)}</text>')
    body.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">generation</text>')
    body.append(f'<text x="{left - 6}" y="{top + 10}" text-anchor="end">max</text>')
    body.append(f'<text x="{left - 6}" y="{top + ph}" text-anchor="end">min</text>')
    return _svg(width, height, body)
