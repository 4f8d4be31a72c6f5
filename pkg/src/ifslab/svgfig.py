"""Self-contained SVG rendering of the two-map figure.

No external fonts or stylesheets: inline attributes only, so the file renders
identically in any viewer.  The two graphs are exact polylines through the
map nodes; the open circle at (1, 1) marks the endpoint both maps reach only
as a continuity limit.
"""

from __future__ import annotations

from .pwl_core import am_map, _check_c

_SIZE = 560
_MARGIN_L = 62
_MARGIN_R = 28
_MARGIN_T = 30
_MARGIN_B = 52

_AXIS_STYLE = 'stroke="#222222" stroke-width="1.2"'
_GRID_STYLE = 'stroke="#999999" stroke-width="0.8" stroke-dasharray="5,4"'
_TEXT = 'font-family="sans-serif" font-size="13" fill="#222222"'


def render_maps_svg(c: float) -> str:
    c = _check_c(c)
    f1 = am_map(c, 1)
    f2 = am_map(c, 2)
    plot_w = _SIZE - _MARGIN_L - _MARGIN_R
    plot_h = _SIZE - _MARGIN_T - _MARGIN_B

    def px(x: float) -> float:
        return _MARGIN_L + x * plot_w

    def py(y: float) -> float:
        return _MARGIN_T + (1.0 - y) * plot_h

    def polyline(mp, color: str) -> str:
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(mp.nodes_x, mp.nodes_y))
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2.2"/>'

    def hgrid(y: float, label: str) -> str:
        line = f'<line x1="{px(0):.2f}" y1="{py(y):.2f}" x2="{px(1):.2f}" y2="{py(y):.2f}" {_GRID_STYLE}/>'
        text = f'<text x="{px(0) - 8:.2f}" y="{py(y) + 4:.2f}" text-anchor="end" {_TEXT}>{label}</text>'
        return line + "\n  " + text

    def vgrid(x: float, label: str) -> str:
        line = f'<line x1="{px(x):.2f}" y1="{py(0):.2f}" x2="{px(x):.2f}" y2="{py(1):.2f}" {_GRID_STYLE}/>'
        text = f'<text x="{px(x):.2f}" y="{py(0) + 18:.2f}" text-anchor="middle" {_TEXT}>{label}</text>'
        return line + "\n  " + text

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
        f'viewBox="0 0 {_SIZE} {_SIZE}">',
        f'  <rect x="0" y="0" width="{_SIZE}" height="{_SIZE}" fill="#ffffff"/>',
        f'  <text x="{_SIZE / 2:.0f}" y="20" text-anchor="middle" {_TEXT}>'
        f"two increasing piecewise-linear maps, c = {c:g}</text>",
        # frame
        f'  <rect x="{px(0):.2f}" y="{py(1):.2f}" width="{plot_w:.2f}" height="{plot_h:.2f}" '
        f'fill="none" {_AXIS_STYLE}/>',
        # diagonal reference
        f'  <line x1="{px(0):.2f}" y1="{py(0):.2f}" x2="{px(1):.2f}" y2="{py(1):.2f}" '
        f'stroke="#cccccc" stroke-width="0.8" stroke-dasharray="2,3"/>',
        "  " + hgrid(c, "c"),
        "  " + hgrid(1.0 - c, "1-c"),
        "  " + vgrid(0.5, "1/2"),
        "  " + vgrid(1.0, "1"),
        f'  <text x="{px(0):.2f}" y="{py(0) + 18:.2f}" text-anchor="middle" {_TEXT}>0</text>',
        f'  <text x="{px(0) - 8:.2f}" y="{py(1) + 4:.2f}" text-anchor="end" {_TEXT}>1</text>',
        "  " + polyline(f1, "#1f77b4"),
        "  " + polyline(f2, "#2ca02c"),
        # legend: map 1 is the one steep below 1/2
        f'  <text x="{px(0.28):.2f}" y="{py(0.62):.2f}" {_TEXT} fill="#1f77b4">f1</text>',
        f'  <text x="{px(0.62):.2f}" y="{py(0.33):.2f}" {_TEXT} fill="#2ca02c">f2</text>',
        # both maps approach (1, 1) but the figure marks it open
        f'  <circle cx="{px(1):.2f}" cy="{py(1):.2f}" r="4.5" fill="#ffffff" '
        f'stroke="#222222" stroke-width="1.6"/>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"
