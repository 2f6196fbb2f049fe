"""Minimal SVG polyline plots; no plotting dependency.

Good enough for phase diagrams and loss curves: a framed canvas,
auto-scaled axes, one polyline per series.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
_W, _H, _PAD = 640, 480, 50


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(vals) - lo) * (out_hi - out_lo) / span


def write_polylines(path, series, title: str = "", labels=None) -> None:
    """Write line plots: ``series`` is a list of (xs, ys) pairs."""
    finite = [
        (np.asarray(xs, float), np.asarray(ys, float))
        for xs, ys in series
        if len(xs)
    ]
    all_x = np.concatenate([xs for xs, _ in finite])
    all_y = np.concatenate([ys for _, ys in finite])
    x_lo, x_hi = float(all_x.min()), float(all_x.max())
    y_lo, y_hi = float(all_y.min()), float(all_y.max())

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        'fill="none" stroke="#888"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_W // 2}" y="30" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{title}</text>'
        )
    for lo, hi, x, y, anchor in (
        (x_lo, x_hi, _PAD, _H - _PAD + 20, "start"),
        (y_lo, y_hi, _PAD - 5, _H - _PAD, "end"),
    ):
        parts.append(
            f'<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" '
            f'font-size="11">{lo:.4g} .. {hi:.4g}</text>'
        )
    for k, (xs, ys) in enumerate(finite):
        px = _scale(xs, x_lo, x_hi, _PAD, _W - _PAD)
        py = _scale(ys, y_lo, y_hi, _H - _PAD, _PAD)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        color = _COLORS[k % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if labels and k < len(labels):
            parts.append(
                f'<text x="{_W - _PAD - 5}" y="{_PAD + 18 + 16 * k}" text-anchor="end" '
                f'font-family="sans-serif" font-size="12" fill="{color}">{labels[k]}</text>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
