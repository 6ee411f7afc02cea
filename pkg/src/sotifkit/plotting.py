"""Self-contained SVG chart for threshold sweeps. No plotting dependency;
the chart is assembled as text so output stays byte-stable."""

from __future__ import annotations

import math
from typing import Sequence

from .protocol import Metrics

_WIDTH = 760
_HEIGHT = 440
_MARGIN_L = 64
_MARGIN_R = 64
_MARGIN_T = 48
_MARGIN_B = 56

_SERIES = (
    ("acr", "#1a7f37"),
    ("far", "#cf222e"),
    ("cqs", "#0969da"),
)
_UQS_COLOR = "#9a6700"


def _x_pos(theta: float, lo: float, hi: float) -> float:
    span = hi - lo or 1.0
    return _MARGIN_L + (theta - lo) / span * (_WIDTH - _MARGIN_L - _MARGIN_R)


def _y_pos(value: float, lo: float, hi: float) -> float:
    span = hi - lo or 1.0
    return _HEIGHT - _MARGIN_B - (value - lo) / span * (_HEIGHT - _MARGIN_T - _MARGIN_B)


def _polyline(points: Sequence[tuple[float, float]], color: str, dashed: bool = False) -> str:
    if not points:
        return ""
    coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in points)
    dash = ' stroke-dasharray="6 3"' if dashed else ""
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{coords}"/>'
    )


def render_sweep_svg(sweep: Sequence[Metrics], title: str = "warning threshold sweep") -> str:
    """Plot ACR/FAR/CQS on the left axis and UQS on the right axis."""
    thetas = [m.theta_w for m in sweep]
    lo = min(thetas) if thetas else 0.0
    hi = max(thetas) if thetas else 1.0
    finite_uqs = [m.uqs for m in sweep if math.isfinite(m.uqs)]
    uqs_top = max(1.0, math.ceil(max(finite_uqs))) if finite_uqs else 1.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.0f}" y="24" text-anchor="middle" font-size="15">{title}</text>',
    ]

    plot_left = _MARGIN_L
    plot_right = _WIDTH - _MARGIN_R
    plot_top = _MARGIN_T
    plot_bottom = _HEIGHT - _MARGIN_B
    parts.append(
        f'<rect x="{plot_left}" y="{plot_top}" width="{plot_right - plot_left}" '
        f'height="{plot_bottom - plot_top}" fill="none" stroke="#444"/>'
    )

    for i in range(6):
        frac = i / 5.0
        y = _y_pos(frac, 0.0, 1.0)
        parts.append(
            f'<line x1="{plot_left}" y1="{y:.1f}" x2="{plot_right}" y2="{y:.1f}" '
            f'stroke="#ddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{plot_left - 8}" y="{y + 4:.1f}" text-anchor="end">{frac:.1f}</text>'
        )
        right_value = frac * uqs_top
        parts.append(
            f'<text x="{plot_right + 8}" y="{y + 4:.1f}" text-anchor="start" '
            f'fill="{_UQS_COLOR}">{right_value:.1f}</text>'
        )

    tick_step = max((hi - lo) / 6.0, 1e-9)
    theta = lo
    while theta <= hi + 1e-9:
        x = _x_pos(theta, lo, hi)
        parts.append(
            f'<line x1="{x:.1f}" y1="{plot_bottom}" x2="{x:.1f}" y2="{plot_bottom + 5}" '
            f'stroke="#444"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{plot_bottom + 20}" text-anchor="middle">{theta:.1f}</text>'
        )
        theta += tick_step
    parts.append(
        f'<text x="{(plot_left + plot_right) / 2:.0f}" y="{_HEIGHT - 16}" '
        f'text-anchor="middle">theta_w</text>'
    )

    for name, color in _SERIES:
        points = [
            (_x_pos(m.theta_w, lo, hi), _y_pos(min(max(getattr(m, name), 0.0), 1.0), 0.0, 1.0))
            for m in sweep
        ]
        parts.append(_polyline(points, color))
    uqs_points = [
        (_x_pos(m.theta_w, lo, hi), _y_pos(min(m.uqs, uqs_top), 0.0, uqs_top))
        for m in sweep
        if math.isfinite(m.uqs)
    ]
    parts.append(_polyline(uqs_points, _UQS_COLOR, dashed=True))

    legend_x = plot_left + 12
    legend_y = plot_top + 16
    for i, (name, color) in enumerate((*_SERIES, ("uqs (right)", _UQS_COLOR))):
        y = legend_y + 16 * i
        parts.append(
            f'<line x1="{legend_x}" y1="{y - 4}" x2="{legend_x + 22}" y2="{y - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{legend_x + 28}" y="{y}">{name}</text>')

    parts.append("</svg>")
    return "\n".join(p for p in parts if p) + "\n"
