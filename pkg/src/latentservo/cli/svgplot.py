"""Tiny deterministic SVG emitters: line charts and cell heatmaps.

No timestamps, no external renderer; float formatting is fixed so the
same data always produces byte-identical files.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

W, H = 640, 420
MARGIN = 52


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _axis_ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi == lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(series: Sequence[Tuple[str, Sequence[float], Sequence[float]]],
               title: str, x_label: str, y_label: str) -> str:
    xs_all = np.concatenate([np.asarray(xs, dtype=float) for _, xs, _ in series])
    ys_all = np.concatenate([np.asarray(ys, dtype=float) for _, _, ys in series])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def px(x):
        return MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2 * MARGIN)

    def py(y):
        return H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2 * MARGIN)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.0f}" y="20" text-anchor="middle" '
           f'font-family="sans-serif" font-size="14">{title}</text>']
    out.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{W - 2 * MARGIN}" '
               f'height="{H - 2 * MARGIN}" fill="none" stroke="#888"/>')
    for tx in _axis_ticks(x_lo, x_hi):
        out.append(f'<line x1="{px(tx):.1f}" y1="{H - MARGIN}" x2="{px(tx):.1f}" '
                   f'y2="{H - MARGIN + 4}" stroke="#888"/>')
        out.append(f'<text x="{px(tx):.1f}" y="{H - MARGIN + 16}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{_fmt(tx)}</text>')
    for ty in _axis_ticks(y_lo, y_hi):
        out.append(f'<line x1="{MARGIN - 4}" y1="{py(ty):.1f}" x2="{MARGIN}" '
                   f'y2="{py(ty):.1f}" stroke="#888"/>')
        out.append(f'<text x="{MARGIN - 7}" y="{py(ty):.1f}" text-anchor="end" '
                   f'dominant-baseline="middle" font-family="sans-serif" '
                   f'font-size="10">{_fmt(ty)}</text>')
    out.append(f'<text x="{W / 2:.0f}" y="{H - 8}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">{x_label}</text>')
    out.append(f'<text x="14" y="{H / 2:.0f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 14 {H / 2:.0f})">{y_label}</text>')

    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(float(x)):.1f},{py(float(y)):.1f}"
                       for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.2"/>')
        if label and len(series) > 1:
            ly = MARGIN + 14 + 13 * i
            out.append(f'<line x1="{W - MARGIN - 90}" y1="{ly}" '
                       f'x2="{W - MARGIN - 70}" y2="{ly}" stroke="{color}" '
                       f'stroke-width="2"/>')
            out.append(f'<text x="{W - MARGIN - 65}" y="{ly + 3}" '
                       f'font-family="sans-serif" font-size="10">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _ramp(t: float) -> str:
    """Blue -> white -> red diverging color ramp for t in [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        u = t / 0.5
        r, g, b = int(40 + 215 * u), int(60 + 195 * u), 255
    else:
        u = (t - 0.5) / 0.5
        r, g, b = 255, int(255 - 195 * u), int(255 - 215 * u)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(grid: np.ndarray, title: str,
            target_cell: Optional[Tuple[float, float]] = None) -> str:
    """Square heatmap of a (n, n) array indexed [iy, ix]; optional target marker."""
    grid = np.asarray(grid, dtype=float)
    n = grid.shape[0]
    size = 420
    cell = (size - 2 * MARGIN) / n
    lo, hi = float(grid.min()), float(grid.max())
    span = hi - lo if hi > lo else 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 30}" '
           f'viewBox="0 0 {size} {size + 30}">',
           f'<rect width="{size}" height="{size + 30}" fill="white"/>',
           f'<text x="{size / 2:.0f}" y="20" text-anchor="middle" '
           f'font-family="sans-serif" font-size="13">{title} '
           f'[{_fmt(lo)}, {_fmt(hi)}]</text>']
    for iy in range(n):
        for ix in range(n):
            t = (grid[iy, ix] - lo) / span
            x = MARGIN + ix * cell
            y = 30 + MARGIN + iy * cell
            out.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cell + 0.5:.1f}" '
                       f'height="{cell + 0.5:.1f}" fill="{_ramp(t)}"/>')
    if target_cell is not None:
        tx = MARGIN + target_cell[0] * (size - 2 * MARGIN)
        ty = 30 + MARGIN + target_cell[1] * (size - 2 * MARGIN)
        out.append(f'<path d="M {tx:.1f} {ty - 6:.1f} L {tx + 6:.1f} {ty:.1f} '
                   f'L {tx:.1f} {ty + 6:.1f} L {tx - 6:.1f} {ty:.1f} Z" '
                   f'fill="none" stroke="black" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
