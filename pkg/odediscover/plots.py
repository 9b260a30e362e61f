"""
Minimal SVG line charts with logarithmic axes.

Only what the CLI needs: one chart per file, a line with point markers per
series, decade ticks on both axes and a legend. Points that cannot be shown
on a log scale (zero, negative, NaN) are dropped.
"""

import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union
from xml.sax.saxutils import escape

import numpy as np
import pandas as pd

WIDTH = 640
HEIGHT = 420
MARGIN = {"left": 70, "right": 170, "top": 40, "bottom": 55}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

Series = Dict[str, Sequence[Tuple[float, float]]]


def _log_range(values: List[float]) -> Tuple[float, float]:
    low = math.floor(math.log10(min(values)))
    high = math.ceil(math.log10(max(values)))
    if high == low:
        high += 1
    return low, high


def _visible(points: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    return sorted((float(x), float(y)) for x, y in points
                  if x > 0 and y > 0 and math.isfinite(x) and math.isfinite(y))


def line_chart(series: Series, title: str, xlabel: str, ylabel: str) -> str:
    """Render series {label: [(x, y), ...]} as an SVG document on log-log axes."""
    cleaned = {label: _visible(points) for label, points in series.items()}
    cleaned = {label: points for label, points in cleaned.items() if points}
    plot_w = WIDTH - MARGIN["left"] - MARGIN["right"]
    plot_h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>']

    if not cleaned:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT / 2:.1f}" text-anchor="middle">no data</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    xs = [x for points in cleaned.values() for x, _ in points]
    ys = [y for points in cleaned.values() for _, y in points]
    x_low, x_high = _log_range(xs)
    y_low, y_high = _log_range(ys)

    def sx(x: float) -> float:
        return MARGIN["left"] + (math.log10(x) - x_low) / (x_high - x_low) * plot_w

    def sy(y: float) -> float:
        return MARGIN["top"] + (y_high - math.log10(y)) / (y_high - y_low) * plot_h

    left, top = MARGIN["left"], MARGIN["top"]
    right, bottom = left + plot_w, top + plot_h
    out.append(f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
               f'fill="none" stroke="black"/>')

    for decade in range(x_low, x_high + 1):
        x = sx(10.0 ** decade)
        out.append(f'<line x1="{x:.1f}" y1="{bottom}" x2="{x:.1f}" y2="{bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{bottom + 18}" text-anchor="middle">1e{decade}</text>')
    for decade in range(y_low, y_high + 1):
        y = sy(10.0 ** decade)
        out.append(f'<line x1="{left - 5}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{right}" y2="{y:.1f}" stroke="#dddddd"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">1e{decade}</text>')

    out.append(f'<text x="{(left + right) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{(top + bottom) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(top + bottom) / 2:.1f})">{escape(ylabel)}</text>')

    for index, (label, points) in enumerate(cleaned.items()):
        color = PALETTE[index % len(PALETTE)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in points)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in points:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}"/>')
        legend_y = top + 10 + 18 * index
        out.append(f'<line x1="{right + 12}" y1="{legend_y}" x2="{right + 32}" y2="{legend_y}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{right + 38}" y="{legend_y + 4}">{escape(label)}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"


def summary_series(summary: pd.DataFrame, metric: str, x: str) -> Series:
    """Mean over states of `metric`, one series per method and the other grid axis.

    x is "N" or "sigma"; the remaining axis goes into the series label.
    """
    other = "sigma" if x == "N" else "N"
    rows = summary[summary["metric"] == metric]
    series: Series = {}
    for (method, level), block in rows.groupby(["method", other], sort=True):
        label = f"{method} {'sigma' if other == 'sigma' else 'N'}={level:g}"
        means = block.groupby(x, sort=True)["mean"].mean()
        series[label] = [(float(k), float(v)) for k, v in means.items() if np.isfinite(v)]
    return series


def save_svg(svg: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(svg, encoding="utf-8")
    return path
