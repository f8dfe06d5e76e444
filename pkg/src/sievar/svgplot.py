"""Dependency-free SVG line charts for IRF overlays and study panels."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Series", "render_panels"]

PALETTE = ("#555555", "#c0392b", "#2471a3", "#1e8449", "#8e44ad", "#b7950b")
DASHES = ("", "6,4", "2,3", "8,3,2,3")


class Series:
    """One labelled polyline."""

    def __init__(self, label: str, x, y, color: str | None = None, dash: str | None = None):
        self.label = label
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.color = color
        self.dash = dash


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0]
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(count - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks or [lo]


def _panel_svg(
    panel: dict, x0: float, y0: float, width: float, height: float
) -> list[str]:
    series: list[Series] = panel["series"]
    margin_l, margin_b, margin_t = 52.0, 34.0, 24.0
    plot_w = width - margin_l - 12.0
    plot_h = height - margin_b - margin_t
    xs = np.concatenate([s.x for s in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([s.y for s in series]) if series else np.array([0.0, 1.0])
    ys = ys[np.isfinite(ys)]
    if ys.size == 0:
        ys = np.array([0.0, 1.0])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    def px(v: float) -> float:
        return x0 + margin_l + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(v: float) -> float:
        return y0 + margin_t + (y_hi - v) / (y_hi - y_lo) * plot_h

    out = [
        f'<rect x="{x0 + margin_l:.1f}" y="{y0 + margin_t:.1f}" width="{plot_w:.1f}" '
        f'height="{plot_h:.1f}" fill="none" stroke="#999"/>',
        f'<text x="{x0 + margin_l + plot_w / 2:.1f}" y="{y0 + 14:.1f}" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif">{panel.get("title", "")}</text>',
    ]
    for tick in _nice_ticks(x_lo, x_hi):
        out.append(
            f'<line x1="{px(tick):.1f}" y1="{py(y_lo):.1f}" x2="{px(tick):.1f}" '
            f'y2="{py(y_lo) + 4:.1f}" stroke="#999"/>'
        )
        out.append(
            f'<text x="{px(tick):.1f}" y="{py(y_lo) + 16:.1f}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{tick:g}</text>'
        )
    for tick in _nice_ticks(y_lo, y_hi):
        out.append(
            f'<line x1="{px(x_lo) - 4:.1f}" y1="{py(tick):.1f}" x2="{px(x_lo):.1f}" '
            f'y2="{py(tick):.1f}" stroke="#999"/>'
        )
        out.append(
            f'<text x="{px(x_lo) - 7:.1f}" y="{py(tick) + 3:.1f}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{tick:g}</text>'
        )
    if y_lo < 0.0 < y_hi:
        out.append(
            f'<line x1="{px(x_lo):.1f}" y1="{py(0.0):.1f}" x2="{px(x_hi):.1f}" '
            f'y2="{py(0.0):.1f}" stroke="#ccc" stroke-dasharray="2,3"/>'
        )
    legend_y = y0 + margin_t + 12.0
    for k, s in enumerate(series):
        color = s.color or PALETTE[k % len(PALETTE)]
        dash = s.dash if s.dash is not None else DASHES[k % len(DASHES)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        pts = " ".join(
            f"{px(a):.1f},{py(b):.1f}" for a, b in zip(s.x, s.y) if math.isfinite(b)
        )
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"{dash_attr}/>')
        lx = x0 + margin_l + plot_w - 120.0
        out.append(
            f'<line x1="{lx:.1f}" y1="{legend_y:.1f}" x2="{lx + 22:.1f}" y2="{legend_y:.1f}" '
            f'stroke="{color}" stroke-width="1.6"{dash_attr}/>'
        )
        out.append(
            f'<text x="{lx + 27:.1f}" y="{legend_y + 3.5:.1f}" font-size="10" '
            f'font-family="sans-serif">{s.label}</text>'
        )
        legend_y += 13.0
    out.append(
        f'<text x="{x0 + margin_l + plot_w / 2:.1f}" y="{y0 + height - 4:.1f}" '
        f'text-anchor="middle" font-size="11" font-family="sans-serif">{panel.get("xlabel", "")}</text>'
    )
    return out


def render_panels(panels: list[dict], ncol: int = 2, panel_width: int = 460, panel_height: int = 320) -> str:
    """Render panel dicts ({title, xlabel, series: [Series]}) to one SVG document."""
    ncol = max(1, min(ncol, len(panels)))
    nrow = math.ceil(len(panels) / ncol)
    width = ncol * panel_width
    height = nrow * panel_height
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for idx, panel in enumerate(panels):
        row, col = divmod(idx, ncol)
        parts.extend(_panel_svg(panel, col * panel_width, row * panel_height, panel_width, panel_height))
    parts.append("</svg>")
    return "\n".join(parts)
