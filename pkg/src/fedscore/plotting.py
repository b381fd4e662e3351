"""Parsimony plot as a standalone, byte-stable SVG (no plotting library)."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import FedScoreError
from .evaluation import ParsimonyCurve, select_model

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 64, 24, 40, 56
BAR = "#9db4cf"
PICK = "#d9534f"


def _f(x: float) -> str:
    return f"{x:.2f}"


def _axis_range(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    lo = math.floor(lo * 20 - 1) / 20
    hi = math.ceil(hi * 20 + 0.5) / 20
    lo = max(lo, 0.0)
    if hi <= lo:
        hi = lo + 0.05
    return lo, hi


def parsimony_svg(curve: ParsimonyCurve, title: str = "Parsimony plot") -> str:
    """Bars of Psi against the number of variables; the selected model is highlighted."""
    fitted = curve.fitted()
    if not fitted:
        raise FedScoreError("cannot plot a curve without fitted points")
    chosen = select_model(curve).m
    lo, hi = _axis_range([p.psi for p in fitted])
    plot_w = WIDTH - LEFT - RIGHT
    plot_h = HEIGHT - TOP - BOTTOM
    ms = [p.m for p in curve.points]
    slot = plot_w / len(ms)
    bar_w = slot * 0.6

    def y_of(v: float) -> float:
        return TOP + plot_h * (1.0 - (v - lo) / (hi - lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{escape(title)}</text>',
    ]
    n_ticks = 5
    for i in range(n_ticks + 1):
        v = lo + (hi - lo) * i / n_ticks
        y = y_of(v)
        out.append(f'<line x1="{LEFT}" y1="{_f(y)}" x2="{WIDTH - RIGHT}" y2="{_f(y)}" '
                   'stroke="#e5e5e5" stroke-width="1"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_f(y + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{v:.3f}</text>')
    for k, p in enumerate(curve.points):
        cx = LEFT + slot * (k + 0.5)
        out.append(f'<text x="{_f(cx)}" y="{HEIGHT - BOTTOM + 16}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{p.m}</text>')
        if p.skipped:
            out.append(f'<text x="{_f(cx)}" y="{_f(y_of(lo) - 6)}" text-anchor="middle" '
                       'font-family="sans-serif" font-size="10" fill="#888">skipped</text>')
            continue
        top = y_of(p.psi)
        fill = PICK if p.m == chosen else BAR
        out.append(f'<rect x="{_f(cx - bar_w / 2)}" y="{_f(top)}" width="{_f(bar_w)}" '
                   f'height="{_f(y_of(lo) - top)}" fill="{fill}"/>')
        out.append(f'<text x="{_f(cx)}" y="{_f(top - 5)}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{p.psi:.3f}</text>')
    out += [
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{HEIGHT - BOTTOM}" stroke="black" stroke-width="1"/>',
        f'<line x1="{LEFT}" y1="{HEIGHT - BOTTOM}" x2="{WIDTH - RIGHT}" y2="{HEIGHT - BOTTOM}" '
        'stroke="black" stroke-width="1"/>',
        f'<text x="{WIDTH / 2:.2f}" y="{HEIGHT - 14}" text-anchor="middle" font-family="sans-serif" '
        'font-size="12">number of variables</text>',
        f'<text x="16" y="{TOP + plot_h / 2:.2f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {TOP + plot_h / 2:.2f})">validation AUC (weighted)</text>',
        "</svg>",
    ]
    return "\n".join(out) + "\n"


def plot_parsimony(curve: ParsimonyCurve, path, title: str = "Parsimony plot") -> Path:
    path = Path(path)
    path.write_text(parsimony_svg(curve, title), encoding="utf-8")
    return path
