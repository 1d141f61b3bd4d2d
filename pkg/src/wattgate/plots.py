"""Deterministic SVG plots.

Hand-rolled on purpose: identical inputs must give byte-identical files,
and the training/eval artifacts should not depend on a plotting stack.
Coordinates are formatted to fixed precision.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigurationError

PALETTE = ("#1f6fb2", "#d2662c", "#3a8a3d", "#9444a0", "#b03036", "#666666")

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 16, 28, 40


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, count)


def _axes(width, height, x_lo, x_hi, y_lo, y_hi, title, x_label, y_label):
    px0, px1 = _MARGIN_L, width - _MARGIN_R
    py0, py1 = height - _MARGIN_B, _MARGIN_T

    def sx(x):
        return px0 + (x - x_lo) / (x_hi - x_lo) * (px1 - px0)

    def sy(y):
        return py0 - (y - y_lo) / (y_hi - y_lo) * (py0 - py1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
    ]
    for xv in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{_fmt(sx(xv))}" y1="{py0}" x2="{_fmt(sx(xv))}" '
            f'y2="{py0 + 4}" stroke="black"/>')
        parts.append(
            f'<text x="{_fmt(sx(xv))}" y="{py0 + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{_fmt(xv)}</text>')
    for yv in _ticks(y_lo, y_hi):
        parts.append(
            f'<line x1="{px0 - 4}" y1="{_fmt(sy(yv))}" x2="{px0}" '
            f'y2="{_fmt(sy(yv))}" stroke="black"/>')
        parts.append(
            f'<text x="{px0 - 6}" y="{_fmt(sy(yv) + 3)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{_fmt(yv)}</text>')
    parts.append(f'<line x1="{px0}" y1="{py0}" x2="{px1}" y2="{py0}" stroke="black"/>')
    parts.append(f'<line x1="{px0}" y1="{py0}" x2="{px0}" y2="{py1}" stroke="black"/>')
    parts.append(
        f'<text x="{(px0 + px1) // 2}" y="{height - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{x_label}</text>')
    parts.append(
        f'<text x="14" y="{(py0 + py1) // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11" '
        f'transform="rotate(-90 14 {(py0 + py1) // 2})">{y_label}</text>')
    return parts, sx, sy


def line_plot(path, series, title="", x_label="", y_label="",
              width=900, height=360):
    """series: list of (label, x array, y array) drawn as polylines."""
    if not series:
        raise ConfigurationError("line_plot needs at least one series")
    xs = np.concatenate([np.asarray(x, dtype=np.float64) for _, x, _ in series])
    ys = np.concatenate([np.asarray(y, dtype=np.float64) for _, _, y in series])
    if xs.size == 0:
        raise ConfigurationError("line_plot needs non-empty series")
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(min(ys.min(), 0.0)), float(ys.max())
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    parts, sx, sy = _axes(width, height, x_lo, x_hi, y_lo, y_hi,
                          title, x_label, y_label)
    for i, (label, x, y) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(float(a)))},{_fmt(sy(float(b)))}"
                       for a, b in zip(np.asarray(x), np.asarray(y)))
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.2" points="{pts}"/>')
        parts.append(
            f'<text x="{width - _MARGIN_R - 6}" y="{_MARGIN_T + 14 * i + 8}" '
            f'text-anchor="end" font-family="sans-serif" font-size="11" '
            f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def histogram_plot(path, edges, counts, title="", x_label="", y_label="count",
                   width=640, height=320):
    edges = np.asarray(edges, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if edges.size != counts.size + 1:
        raise ConfigurationError("histogram needs len(edges) == len(counts) + 1")
    y_hi = float(counts.max()) if counts.size else 1.0
    if y_hi <= 0:
        y_hi = 1.0
    parts, sx, sy = _axes(width, height, float(edges[0]), float(edges[-1]),
                          0.0, y_hi, title, x_label, y_label)
    for i in range(counts.size):
        x0, x1 = sx(float(edges[i])), sx(float(edges[i + 1]))
        y0, y1 = sy(0.0), sy(float(counts[i]))
        parts.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(y1)}" width="{_fmt(x1 - x0)}" '
            f'height="{_fmt(y0 - y1)}" fill="{PALETTE[0]}" stroke="white" '
            f'stroke-width="0.5"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
