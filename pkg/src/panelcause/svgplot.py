"""Minimal standalone SVG line charts with the plotted data embedded as
comments, so figures need no display stack and stay reproducible."""

from __future__ import annotations

import numpy as np

_COLORS = ["#555555", "#c0392b", "#2471a3", "#1e8449", "#9a7d0a", "#7d3c98"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 62, 18, 34, 46


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min(s for s in (1 * mag, 2 * mag, 5 * mag, 10 * mag) if s >= raw)
    first = np.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else float(v))
        v += step
    return out


def line_chart(path, series: dict, title: str = "", x_label: str = "",
               y_label: str = "") -> None:
    """Write a line chart; series maps name -> (x values, y values[, dashed])."""
    xs = np.concatenate([np.asarray(s[0], dtype=float) for s in series.values()])
    ys = np.concatenate([np.asarray(s[1], dtype=float) for s in series.values()])
    ys = ys[np.isfinite(ys)]
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def sy(y):
        return _H - _MB - (y - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">']
    for name, s in series.items():
        x = ", ".join(repr(float(v)) for v in np.asarray(s[0], dtype=float))
        y = ", ".join(repr(float(v)) for v in np.asarray(s[1], dtype=float))
        parts.append(f"<!-- data {name}: x=[{x}] y=[{y}] -->")
    parts.append(f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>')
    if title:
        parts.append(f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    ax = (f'M {_ML} {_MT} L {_ML} {_H - _MB} L {_W - _MR} {_H - _MB}')
    parts.append(f'<path d="{ax}" stroke="#222" fill="none"/>')
    for tx in _ticks(x_lo, x_hi):
        px = sx(tx)
        parts.append(f'<line x1="{px:.1f}" y1="{_H - _MB}" x2="{px:.1f}" '
                     f'y2="{_H - _MB + 4}" stroke="#222"/>')
        parts.append(f'<text x="{px:.1f}" y="{_H - _MB + 17}" text-anchor="middle">'
                     f'{tx:g}</text>')
    for ty in _ticks(y_lo, y_hi):
        py = sy(ty)
        parts.append(f'<line x1="{_ML - 4}" y1="{py:.1f}" x2="{_ML}" y2="{py:.1f}" '
                     f'stroke="#222"/>')
        parts.append(f'<text x="{_ML - 7}" y="{py + 4:.1f}" text-anchor="end">'
                     f'{ty:g}</text>')
    if x_label:
        parts.append(f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 10}" '
                     f'text-anchor="middle">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="16" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
                     f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2:.1f})">{y_label}</text>')
    legend_y = _MT + 4
    for k, (name, s) in enumerate(series.items()):
        x = np.asarray(s[0], dtype=float)
        y = np.asarray(s[1], dtype=float)
        ok = np.isfinite(y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
        color = _COLORS[k % len(_COLORS)]
        dash = ' stroke-dasharray="6 4"' if len(s) > 2 and s[2] else ""
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.6"{dash}/>')
        parts.append(f'<line x1="{_W - _MR - 130}" y1="{legend_y}" '
                     f'x2="{_W - _MR - 106}" y2="{legend_y}" stroke="{color}" '
                     f'stroke-width="1.6"{dash}/>')
        parts.append(f'<text x="{_W - _MR - 100}" y="{legend_y + 4}">{name}</text>')
        legend_y += 16
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
