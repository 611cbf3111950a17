"""Tiny deterministic SVG charts, no plotting dependencies.

Output is plain text with fixed formatting so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 40, 70
_COLORS = ("#4878a8", "#d08848", "#60a860", "#b05858", "#8868a8", "#707070")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _header(title: str) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
    ]


def _axes(y_lo: float, y_hi: float, ylabel: str) -> list:
    x0, y0, y1 = _ML, _H - _MB, _MT
    parts = [
        f'<line x1="{x0}" y1="{y0}" x2="{_W - _MR}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="16" y="{(y0 + y1) // 2}" font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 16 {(y0 + y1) // 2})" text-anchor="middle">{ylabel}</text>',
    ]
    for i in range(5):
        frac = i / 4
        v = y_lo + frac * (y_hi - y_lo)
        y = y0 - frac * (y0 - y1)
        parts.append(
            f'<text x="{x0 - 6}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{_fmt(v)}</text>'
        )
        parts.append(
            f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x0}" y2="{_fmt(y)}" stroke="black"/>'
        )
    return parts


def _span(values) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo > 0:
        lo = 0.0
    if hi < 0:
        hi = 0.0
    if hi == lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - (pad if lo < 0 else 0.0), hi + (pad if hi > 0 else 0.0)


def bar_chart(labels, values, title: str, ylabel: str = "") -> str:
    """Vertical bars with value captions."""
    if len(labels) != len(values) or not labels:
        raise ValueError("labels and values must be non-empty and equal length")
    y_lo, y_hi = _span(list(values) + [0.0])
    y0, y1 = _H - _MB, _MT
    scale = (y0 - y1) / (y_hi - y_lo)
    zero_y = y0 - (0.0 - y_lo) * scale
    parts = _header(title) + _axes(y_lo, y_hi, ylabel)
    n = len(values)
    slot = (_W - _ML - _MR) / n
    width = 0.6 * slot
    for i, (label, v) in enumerate(zip(labels, values)):
        x = _ML + i * slot + (slot - width) / 2
        top = y0 - (v - y_lo) * scale
        y_rect, h_rect = (top, zero_y - top) if v >= 0 else (zero_y, top - zero_y)
        color = _COLORS[i % len(_COLORS)]
        parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y_rect)}" width="{_fmt(width)}" '
            f'height="{_fmt(h_rect)}" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_fmt(x + width / 2)}" y="{_fmt(top - 5 if v >= 0 else y_rect + h_rect + 14)}" '
            f'text-anchor="middle" font-size="11" font-family="sans-serif">{_fmt(v)}</text>'
        )
        parts.append(
            f'<text x="{_fmt(x + width / 2)}" y="{_H - _MB + 16}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_chart(series, title: str, xlabel: str = "", ylabel: str = "") -> str:
    """series: list of (name, xs, ys). Shared axes, legend at top right."""
    if not series:
        raise ValueError("no series")
    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    if not all_x:
        raise ValueError("empty series")
    x_lo, x_hi = min(all_x), max(all_x)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    y_lo, y_hi = _span(all_y)
    x0, x1 = _ML, _W - _MR
    y0, y1 = _H - _MB, _MT
    xs_scale = (x1 - x0) / (x_hi - x_lo)
    ys_scale = (y0 - y1) / (y_hi - y_lo)
    parts = _header(title) + _axes(y_lo, y_hi, ylabel)
    parts.append(
        f'<text x="{(x0 + x1) // 2}" y="{_H - 16}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{xlabel}</text>'
    )
    for i, (name, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(
            f"{_fmt(x0 + (x - x_lo) * xs_scale)},{_fmt(y0 - (y - y_lo) * ys_scale)}"
            for x, y in zip(xs, ys)
        )
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = _MT + 16 * i
        parts.append(f'<rect x="{x1 - 130}" y="{ly - 9}" width="12" height="3" fill="{color}"/>')
        parts.append(
            f'<text x="{x1 - 112}" y="{ly - 3}" font-size="11" '
            f'font-family="sans-serif">{name}</text>'
        )
    for i in range(5):
        frac = i / 4
        v = x_lo + frac * (x_hi - x_lo)
        x = x0 + frac * (x1 - x0)
        parts.append(
            f'<text x="{_fmt(x)}" y="{_H - _MB + 16}" text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{_fmt(v)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
