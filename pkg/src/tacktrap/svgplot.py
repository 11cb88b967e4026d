"""Minimal static SVG plots (line and scatter) with deterministic output.

No plotting library: outputs are byte-identical across runs for a given
input, which keeps artifact hashing honest. Coordinates are formatted with a
fixed precision and the palette is fixed.
"""

from __future__ import annotations

import math

from .config import atomic_write_text

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 64, 16, 28, 46  # margins


def _fmt(x):
    return f"{x:.2f}"


def _nice_ticks(lo, hi, target=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= target + 1:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks


def _esc(text):
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
    )


def plot_svg(path, series, kind="line", title="", xlabel="", ylabel=""):
    """Write one SVG plot. series = [(label, x_list, y_list), ...]."""
    xs = [float(v) for _, x, _ in series for v in x]
    ys = [float(v) for _, _, y in series for v in y]
    finite_x = [v for v in xs if math.isfinite(v)]
    finite_y = [v for v in ys if math.isfinite(v)]
    if not finite_x or not finite_y:
        finite_x, finite_y = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(finite_x), max(finite_x)
    y_lo, y_hi = min(finite_y), max(finite_y)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad_x = 0.04 * (x_hi - x_lo)
    pad_y = 0.06 * (y_hi - y_lo)
    x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    pw = _W - _ML - _MR
    ph = _H - _MT - _MB

    def sx(v):
        return _ML + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return _MT + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" '
        f'stroke="#333" stroke-width="1"/>',
    ]
    if title:
        out.append(
            f'<text x="{_W // 2}" y="18" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{_esc(title)}</text>'
        )
    for t in _nice_ticks(x_lo, x_hi):
        px = sx(t)
        out.append(
            f'<line x1="{_fmt(px)}" y1="{_MT + ph}" x2="{_fmt(px)}" '
            f'y2="{_MT + ph + 4}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{_fmt(px)}" y="{_MT + ph + 17}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{t:.6g}</text>'
        )
    for t in _nice_ticks(y_lo, y_hi):
        py = sy(t)
        out.append(
            f'<line x1="{_ML - 4}" y1="{_fmt(py)}" x2="{_ML}" '
            f'y2="{_fmt(py)}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{_ML - 7}" y="{_fmt(py + 3)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{t:.6g}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{_ML + pw // 2}" y="{_H - 10}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_esc(xlabel)}</text>'
        )
    if ylabel:
        cx, cy = 14, _MT + ph // 2
        out.append(
            f'<text x="{cx}" y="{cy}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11" '
            f'transform="rotate(-90 {cx} {cy})">{_esc(ylabel)}</text>'
        )
    for i, (label, x, y) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = [
            (sx(float(a)), sy(float(b)))
            for a, b in zip(x, y)
            if math.isfinite(float(a)) and math.isfinite(float(b))
        ]
        if kind == "line" and len(pts) >= 2:
            d = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
            out.append(
                f'<polyline points="{d}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
        else:
            for a, b in pts:
                out.append(
                    f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="2.2" '
                    f'fill="{color}" fill-opacity="0.75"/>'
                )
        if label:
            ly = _MT + 14 + 14 * i
            out.append(
                f'<line x1="{_ML + pw - 120}" y1="{ly - 4}" x2="{_ML + pw - 100}" '
                f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
            )
            out.append(
                f'<text x="{_ML + pw - 94}" y="{ly}" font-family="sans-serif" '
                f'font-size="10">{_esc(label)}</text>'
            )
    out.append("</svg>")
    atomic_write_text(path, "\n".join(out) + "\n")
