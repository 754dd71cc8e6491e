"""Hand-written SVG for the (Density, QuasiCheck) feasible-region plot."""

from __future__ import annotations

from typing import Sequence

WIDTH, HEIGHT, PAD = 520, 420, 60


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def region_svg(
    boundary: Sequence[tuple[float, float]],
    scatter: Sequence[tuple[float, float]],
    kappa: int,
    w_q_floor: float | None = None,
) -> str:
    """Axes, the boundary curve, the shaded forbidden region above it,
    random-witness markers and an x at the rigid point (1/kappa, 1).

    The w_Q axis spans [w_q_floor, 1]; by default the floor sits just below
    the lowest plotted value so the thin allowed band stays visible.
    """
    lows = [w for _, w in boundary] + [w for _, w in scatter]
    if w_q_floor is None:
        lo = min(lows) if lows else 0.0
        w_q_floor = max(0.0, lo - 0.1 * max(1e-12, 1.0 - lo))
    x0, x1 = 1.0 / kappa, 1.0
    y0, y1 = w_q_floor, 1.0
    span_y = max(y1 - y0, 1e-15)
    plot_w, plot_h = WIDTH - 2 * PAD, HEIGHT - 2 * PAD

    def sx(x: float) -> float:
        return PAD + (x - x0) / (x1 - x0) * plot_w

    def sy(y: float) -> float:
        return HEIGHT - PAD - (y - y0) / span_y * plot_h

    curve = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in boundary)
    top = f"{_fmt(sx(x1))},{_fmt(sy(y1))} {_fmt(sx(x0))},{_fmt(sy(y1))}"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<polygon points="{curve} {top}" fill="#d9534f" fill-opacity="0.25" stroke="none"/>',
        f'<polyline points="{curve}" fill="none" stroke="#b52b27" stroke-width="2"/>',
    ]
    for x, y in scatter:
        parts.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2" fill="#337ab7"/>')
    rx, ry = sx(x0), sy(1.0)
    parts.append(
        f'<path d="M{_fmt(rx - 6)},{_fmt(ry - 6)} L{_fmt(rx + 6)},{_fmt(ry + 6)} '
        f'M{_fmt(rx - 6)},{_fmt(ry + 6)} L{_fmt(rx + 6)},{_fmt(ry - 6)}" stroke="black" stroke-width="2"/>'
    )
    bottom = HEIGHT - PAD
    parts += [
        f'<line x1="{PAD}" y1="{bottom}" x2="{WIDTH - PAD}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{bottom}" x2="{PAD}" y2="{PAD}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="14">A(Density)</text>',
        f'<text x="18" y="{HEIGHT / 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {HEIGHT / 2})">A(QuasiCheck)</text>',
    ]
    for x in (x0, (x0 + x1) / 2, x1):
        parts.append(
            f'<text x="{_fmt(sx(x))}" y="{bottom + 18}" text-anchor="middle" font-size="11">{x:.3g}</text>'
        )
    for y in (y0, y1):
        parts.append(
            f'<text x="{PAD - 6}" y="{_fmt(sy(y) + 4)}" text-anchor="end" font-size="11">{y:.6g}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
