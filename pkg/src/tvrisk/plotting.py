"""Minimal static SVG line charts with confidence bands; no plotting dependency."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

WIDTH, HEIGHT = 720, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 36, 44
SERIES_COLORS = ("#b13f3f", "#3f5fb1", "#3fa06a", "#8a5fb1", "#b1873f")
BAND_OPACITY = 0.25


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-9 * step:
        out.append(round(t, 10))
        t += step
    return out or [lo]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def svg_line_chart(
    path,
    series: Sequence[dict],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    ref_y: float | None = None,
):
    """Write a line chart; each series is a dict with keys x, y and optional
    lo/hi band arrays and a label."""
    xs = np.concatenate([np.asarray(s["x"], dtype=float) for s in series])
    ys = []
    for s in series:
        ys.append(np.asarray(s["y"], dtype=float))
        for key in ("lo", "hi"):
            if s.get(key) is not None:
                ys.append(np.asarray(s[key], dtype=float))
    yall = np.concatenate(ys)
    if ref_y is not None:
        yall = np.append(yall, ref_y)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(yall.min()), float(yall.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    iw = WIDTH - MARGIN_L - MARGIN_R
    ih = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - x0) / (x1 - x0) * iw

    def py(y):
        return MARGIN_T + (y1 - y) / (y1 - y0) * ih

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>'
        )
    # axes and ticks
    parts.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{iw}" height="{ih}" '
        f'fill="none" stroke="#444"/>'
    )
    for t in _ticks(x0, x1):
        x = px(t)
        parts.append(f'<line x1="{x:.1f}" y1="{MARGIN_T + ih}" x2="{x:.1f}" '
                     f'y2="{MARGIN_T + ih + 4}" stroke="#444"/>')
        parts.append(f'<text x="{x:.1f}" y="{MARGIN_T + ih + 18}" '
                     f'text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        y = py(t)
        parts.append(f'<line x1="{MARGIN_L - 4}" y1="{y:.1f}" x2="{MARGIN_L}" '
                     f'y2="{y:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{MARGIN_L - 8}" y="{y + 4:.1f}" '
                     f'text-anchor="end">{_fmt(t)}</text>')
    if xlabel:
        parts.append(
            f'<text x="{MARGIN_L + iw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">{xlabel}</text>'
        )
    if ylabel:
        yc = MARGIN_T + ih / 2
        parts.append(
            f'<text x="16" y="{yc:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {yc:.1f})">{ylabel}</text>'
        )
    if ref_y is not None and y0 <= ref_y <= y1:
        y = py(ref_y)
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{y:.1f}" x2="{MARGIN_L + iw}" y2="{y:.1f}" '
            f'stroke="#999" stroke-dasharray="4 3"/>'
        )

    for i, s in enumerate(series):
        color = SERIES_COLORS[i % len(SERIES_COLORS)]
        x = np.asarray(s["x"], dtype=float)
        y = np.asarray(s["y"], dtype=float)
        if s.get("lo") is not None and s.get("hi") is not None:
            lo = np.asarray(s["lo"], dtype=float)
            hi = np.asarray(s["hi"], dtype=float)
            pts = [f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, hi)]
            pts += [f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x[::-1], lo[::-1])]
            parts.append(
                f'<polygon points="{" ".join(pts)}" fill="{color}" '
                f'fill-opacity="{BAND_OPACITY}" stroke="none"/>'
            )
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        label = s.get("label")
        if label:
            ly = MARGIN_T + 16 + 16 * i
            parts.append(f'<line x1="{MARGIN_L + 8}" y1="{ly - 4}" x2="{MARGIN_L + 28}" '
                         f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{MARGIN_L + 34}" y="{ly}">{label}</text>')

    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")


def effect_series_svg(series_list, path, title="", ylabel="odds ratio"):
    svg_line_chart(
        path,
        [
            {
                "x": s.days,
                "y": [p.odds_ratio for p in s.points],
                "lo": [p.lower95 for p in s.points],
                "hi": [p.upper95 for p in s.points],
                "label": s.subject,
            }
            for s in series_list
        ],
        title=title,
        xlabel="admission day",
        ylabel=ylabel,
        ref_y=1.0,
    )


def shape_band_svg(band, path, title=""):
    nreg = band.bin_map.n_regular
    svg_line_chart(
        path,
        [
            {
                "x": band.midpoints,
                "y": band.mean[:nreg],
                "lo": band.lower[:nreg],
                "hi": band.upper[:nreg],
                "label": band.feature,
            }
        ],
        title=title or band.feature,
        xlabel=band.feature,
        ylabel="log-odds contribution",
        ref_y=0.0,
    )
