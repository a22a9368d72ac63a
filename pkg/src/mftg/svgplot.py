"""Minimal dependency-free SVG line plots.

Fixed 720x480 viewport, one polyline per series, five ticks per axis, and a
text legend.  Enough to eyeball trajectories and coefficient schedules next
to the CSV outputs.
"""

from __future__ import annotations

WIDTH, HEIGHT = 720, 480
MARGIN_LEFT, MARGIN_RIGHT = 70, 20
MARGIN_TOP, MARGIN_BOTTOM = 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#17becf", "#7f7f7f")


def _bounds(values) -> tuple[float, float]:
    lo = min(values)
    hi = max(values)
    if lo == hi:
        pad = 1.0 if lo == 0.0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def line_plot(xs, series, title: str, xlabel: str, ylabel: str) -> str:
    """Render series = [(label, ys), ...] over common xs into an SVG string."""
    xs = [float(v) for v in xs]
    if not series or not xs:
        raise ValueError("line_plot needs at least one series and one x value")
    x_lo, x_hi = _bounds(xs)
    all_y = [float(v) for _, ys in series for v in ys]
    y_lo, y_hi = _bounds(all_y)
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x: float) -> float:
        return MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
    ]
    # axes box and ticks
    parts.append(
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333" stroke-width="1"/>'
    )
    for t in range(5):
        frac = t / 4
        x_val = x_lo + frac * (x_hi - x_lo)
        y_val = y_lo + frac * (y_hi - y_lo)
        gx = px(x_val)
        gy = py(y_val)
        parts.append(
            f'<line x1="{gx:.1f}" y1="{MARGIN_TOP + plot_h}" x2="{gx:.1f}" '
            f'y2="{MARGIN_TOP + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{gx:.1f}" y="{MARGIN_TOP + plot_h + 18}" '
            f'text-anchor="middle">{_fmt(x_val)}</text>'
        )
        parts.append(
            f'<line x1="{MARGIN_LEFT - 5}" y1="{gy:.1f}" x2="{MARGIN_LEFT}" '
            f'y2="{gy:.1f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{MARGIN_LEFT - 8}" y="{gy + 4:.1f}" '
            f'text-anchor="end">{_fmt(y_val)}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_LEFT + plot_w / 2}" y="{HEIGHT - 10}" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{MARGIN_TOP + plot_h / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN_TOP + plot_h / 2})">{ylabel}</text>'
    )
    for idx, (label, ys) in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        points = " ".join(f"{px(x):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.6"/>'
        )
        ly = MARGIN_TOP + 16 + 16 * idx
        lx = MARGIN_LEFT + plot_w - 150
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{lx + 28}" y="{ly}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
