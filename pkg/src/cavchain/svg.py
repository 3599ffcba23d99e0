"""Minimal SVG emission for stability charts.

Rendering is illustrative only: every quantitative comparison runs on the
CSV outputs. The chart drawing mirrors the usual color scheme: light gray
for the plant-stable region, dark gray for the string-stable region, red
plant boundaries, blue string boundaries.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

from .stability import (PLANT_UNSTABLE, STRING_STABLE, STRING_UNSTABLE,
                        StabilityChart)

CLASS_FILL = {
    PLANT_UNSTABLE: "#ffffff",
    STRING_UNSTABLE: "#c8c8c8",
    STRING_STABLE: "#707070",
    -1: "#f4e0e0",
}

CURVE_STYLE = {
    "plant-s0": ("#cc2222", "4,3"),
    "plant-iomega": ("#cc2222", None),
    "plant-ring": ("#e06666", None),
    "string-omega0": ("#2244cc", "4,3"),
    "string-K": ("#88aadd", None),
    "string-envelope": ("#2244cc", None),
    "ring-k": ("#22aa66", None),
}


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


class SvgCanvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: List[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">']

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" '
                          f'height="{h:.2f}" fill="{fill}" stroke="{stroke}"/>')

    def polyline(self, pts: Sequence[Tuple[float, float]], color: str,
                 dash: str = None, width: float = 1.4):
        if len(pts) < 2:
            return
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{coords}" fill="none" '
                          f'stroke="{color}" stroke-width="{width}"{dash_attr}/>')

    def line(self, x1, y1, x2, y2, color="#000000", width=1.0):
        self.parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" '
                          f'y2="{y2:.2f}" stroke="{color}" stroke-width="{width}"/>')

    def text(self, x, y, s, size=12, anchor="middle"):
        self.parts.append(f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" '
                          f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>')

    def to_string(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def chart_svg(chart: StabilityChart, width: int = 520, height: int = 480) -> str:
    margin = dict(left=58, right=16, top=16, bottom=46)
    pw = width - margin["left"] - margin["right"]
    ph = height - margin["top"] - margin["bottom"]
    x0, x1 = chart.x_edges[0], chart.x_edges[-1]
    y0, y1 = chart.y_edges[0], chart.y_edges[-1]

    def px(x):
        return margin["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return margin["top"] + (y1 - y) / (y1 - y0) * ph

    svg = SvgCanvas(width, height)
    svg.rect(margin["left"], margin["top"], pw, ph, "#ffffff", stroke="#000000")

    ny, nx = chart.classes.shape
    for j in range(ny):
        for i in range(nx):
            code = int(chart.classes[j, i])
            if code == PLANT_UNSTABLE:
                continue
            svg.rect(px(chart.x_edges[i]), py(chart.y_edges[j + 1]),
                     px(chart.x_edges[i + 1]) - px(chart.x_edges[i]),
                     py(chart.y_edges[j]) - py(chart.y_edges[j + 1]),
                     CLASS_FILL.get(code, "#f4e0e0"))

    for curve in chart.curves:
        color, dash = CURVE_STYLE.get(curve.kind, ("#999999", None))
        pts = [(px(x), py(y)) for x, y in curve.points
               if x0 <= x <= x1 and y0 <= y <= y1]
        # break the polyline where consecutive samples jump across the box
        run: List[Tuple[float, float]] = []
        prev = None
        for p in pts:
            if prev is not None and (abs(p[0] - prev[0]) > 0.25 * pw
                                     or abs(p[1] - prev[1]) > 0.25 * ph):
                svg.polyline(run, color, dash)
                run = []
            run.append(p)
            prev = p
        svg.polyline(run, color, dash)

    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        svg.line(px(xv), py(y0), px(xv), py(y0) + 5)
        svg.text(px(xv), py(y0) + 20, _fmt(xv), size=11)
        svg.line(px(x0) - 5, py(yv), px(x0), py(yv))
        svg.text(px(x0) - 9, py(yv) + 4, _fmt(yv), size=11, anchor="end")
    svg.text(margin["left"] + pw / 2, height - 8, chart.plane[0])
    svg.text(14, margin["top"] + ph / 2, chart.plane[1])
    return svg.to_string()


__all__ = ["SvgCanvas", "chart_svg", "CLASS_FILL", "CURVE_STYLE"]
