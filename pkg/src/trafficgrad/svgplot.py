"""Tiny dependency-free SVG line charts for reward curves.

Output is a plain string built deterministically from the data, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

WIDTH, HEIGHT = 960, 540
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 30, 50, 55
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


@dataclass
class Curve:
    label: str
    xs: list[float]
    ys: list[float]
    color: str = ""
    dash: str = ""      # e.g. "4,3" for a dashed support line
    width: float = 2.0


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    import math
    raw = span / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12:
        out.append(round(t, 10))
        t += step
    return out or [lo, hi]


def line_chart(curves: list[Curve], title: str, xlabel: str, ylabel: str) -> str:
    xs_all = [x for c in curves for x in c.xs]
    ys_all = [y for c in curves for y in c.ys]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica,Arial,sans-serif">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="28" font-size="18" text-anchor="middle">{title}</text>',
    ]
    for t in _ticks(x_lo, x_hi):
        x = px(t)
        parts.append(f'<line x1="{x:.1f}" y1="{MARGIN_T}" x2="{x:.1f}" '
                     f'y2="{HEIGHT - MARGIN_B}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{x:.1f}" y="{HEIGHT - MARGIN_B + 18}" font-size="12" '
                     f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        y = py(t)
        parts.append(f'<line x1="{MARGIN_L}" y1="{y:.1f}" x2="{WIDTH - MARGIN_R}" '
                     f'y2="{y:.1f}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{MARGIN_L - 8}" y="{y + 4:.1f}" font-size="12" '
                     f'text-anchor="end">{_fmt(t)}</text>')
    parts.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
                 f'fill="none" stroke="#555555"/>')
    parts.append(f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 14}" font-size="14" '
                 f'text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="20" y="{HEIGHT / 2:.0f}" font-size="14" text-anchor="middle" '
                 f'transform="rotate(-90 20 {HEIGHT / 2:.0f})">{ylabel}</text>')

    legend_entries = []
    for i, c in enumerate(curves):
        color = c.color or PALETTE[i % len(PALETTE)]
        if len(c.xs) == 1:
            pts = f'{px(c.xs[0]):.2f},{py(c.ys[0]):.2f}'
            parts.append(f'<circle cx="{px(c.xs[0]):.2f}" cy="{py(c.ys[0]):.2f}" '
                         f'r="3" fill="{color}"/>')
        else:
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(c.xs, c.ys))
            dash = f' stroke-dasharray="{c.dash}"' if c.dash else ""
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                         f'stroke-width="{c.width}"{dash}/>')
        if c.label:
            legend_entries.append((c.label, color, c.dash))
    for i, (label, color, dash) in enumerate(legend_entries):
        y = MARGIN_T + 16 + 18 * i
        x = WIDTH - MARGIN_R - 180
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 26}" y2="{y}" stroke="{color}" '
                     f'stroke-width="2.5"{dash_attr}/>')
        parts.append(f'<text x="{x + 32}" y="{y + 4}" font-size="13">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_chart(path: str, curves: list[Curve], title: str,
                xlabel: str = "episode", ylabel: str = "mean reward") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(line_chart(curves, title, xlabel, ylabel))
