"""Minimal SVG renderer (lines, rectangles, circles, text) for study figures.

CSV stays the canonical output; these drawings are conveniences with no
dependencies beyond the standard library.
"""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 60


class Canvas:
    def __init__(self, title: str, width: int = W, height: int = H):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        ]
        self.text(width / 2, 20, title, anchor="middle", size=14)

    def text(self, x, y, s, anchor="start", size=11, rotate=None) -> None:
        tr = f' transform="rotate({rotate} {x:.1f} {y:.1f})"' if rotate else ""
        self.parts.append(f'<text x="{x:.1f}" y="{y:.1f}" text-anchor="{anchor}" font-size="{size}"{tr}>{escape(str(s))}</text>')

    def line(self, x1, y1, x2, y2, color="#000", width=1.0, dash=None) -> None:
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" y2="{y2:.1f}" stroke="{color}" stroke-width="{width}"{d}/>')

    def polyline(self, pts, color, width=2.0) -> None:
        p = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
        self.parts.append(f'<polyline points="{p}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def rect(self, x, y, w, h, fill, stroke="none") -> None:
        self.parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{w:.1f}" height="{h:.1f}" fill="{fill}" stroke="{stroke}"/>')

    def circle(self, x, y, r, fill, opacity=0.6) -> None:
        self.parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="{r}" fill="{fill}" fill-opacity="{opacity}"/>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _axes(c: Canvas, xlabel: str, ylabel: str, ymin=0.0, ymax=1.0, ticks=5):
    x0, x1 = LEFT, c.width - RIGHT
    y0, y1 = c.height - BOTTOM, TOP
    c.line(x0, y0, x1, y0)
    c.line(x0, y0, x0, y1)
    for i in range(ticks + 1):
        v = ymin + (ymax - ymin) * i / ticks
        y = y0 - (y0 - y1) * i / ticks
        c.line(x0 - 4, y, x0, y)
        c.text(x0 - 6, y + 4, f"{v:.2f}", anchor="end")
    c.text((x0 + x1) / 2, c.height - 15, xlabel, anchor="middle")
    c.text(18, (y0 + y1) / 2, ylabel, anchor="middle", rotate=-90)
    return x0, x1, y0, y1


def line_chart(title: str, series: Mapping[str, Sequence[tuple[float, float]]], xlabel: str, ylabel: str) -> str:
    c = Canvas(title)
    xs = [x for pts in series.values() for x, _ in pts]
    xmin, xmax = min(xs), max(xs)
    x0, x1, y0, y1 = _axes(c, xlabel, ylabel)
    sx = lambda x: x0 + (x1 - x0) * (x - xmin) / ((xmax - xmin) or 1.0)
    sy = lambda y: y0 - (y0 - y1) * y
    for x in sorted(set(xs)):
        c.text(sx(x), y0 + 15, f"{x:g}", anchor="middle")
    for i, (name, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        c.polyline([(sx(x), sy(y)) for x, y in pts], color)
        c.line(x1 + 10, TOP + 16 * i + 10, x1 + 25, TOP + 16 * i + 10, color, 2)
        c.text(x1 + 30, TOP + 16 * i + 14, name)
    return c.render()


def bar_chart(title: str, values: Mapping[str, float], ylabel: str) -> str:
    c = Canvas(title)
    x0, x1, y0, y1 = _axes(c, "", ylabel)
    n = len(values)
    slot = (x1 - x0) / max(n, 1)
    for i, (name, v) in enumerate(values.items()):
        h = (y0 - y1) * max(0.0, min(1.0, v))
        c.rect(x0 + slot * i + slot * 0.15, y0 - h, slot * 0.7, h, PALETTE[i % len(PALETTE)])
        c.text(x0 + slot * (i + 0.5), y0 - h - 4, f"{v:.3f}", anchor="middle", size=10)
        c.text(x0 + slot * (i + 0.5), y0 + 15, name, anchor="middle", size=9)
    return c.render()


def _heat(v: float) -> str:
    v = max(0.0, min(1.0, v))
    r = int(255 * min(1.0, 2 * v))
    b = int(255 * min(1.0, 2 * (1 - v)))
    return f"#{r:02x}{min(r, b):02x}{b:02x}"


def heatmap(title: str, rows: Sequence[str], cols: Sequence[str], cells: Mapping[tuple[str, str], float], lo=0.2, hi=0.55) -> str:
    c = Canvas(title)
    x0, y0 = 140, TOP + 20
    cw = (c.width - x0 - 40) / max(len(cols), 1)
    ch = (c.height - y0 - 40) / max(len(rows), 1)
    for j, col in enumerate(cols):
        c.text(x0 + cw * (j + 0.5), y0 - 6, col, anchor="middle")
    for i, row in enumerate(rows):
        c.text(x0 - 6, y0 + ch * (i + 0.5) + 4, row, anchor="end")
        for j, col in enumerate(cols):
            v = cells.get((row, col))
            if v is None:
                c.rect(x0 + cw * j, y0 + ch * i, cw, ch, "#eeeeee", "#ffffff")
                c.text(x0 + cw * (j + 0.5), y0 + ch * (i + 0.5) + 4, "n/a", anchor="middle")
                continue
            c.rect(x0 + cw * j, y0 + ch * i, cw, ch, _heat((v - lo) / (hi - lo)), "#ffffff")
            c.text(x0 + cw * (j + 0.5), y0 + ch * (i + 0.5) + 4, f"{v:.3f}", anchor="middle")
    return c.render()


def scatter(title: str, points: Sequence[tuple[float, float]], xlabel: str, ylabel: str, zone: tuple[float, float] | None = None) -> str:
    c = Canvas(title)
    x0, x1, y0, y1 = _axes(c, xlabel, ylabel)
    sx = lambda x: x0 + (x1 - x0) * x
    sy = lambda y: y0 - (y0 - y1) * y
    for i in range(6):
        c.text(sx(i / 5), y0 + 15, f"{i / 5:.1f}", anchor="middle")
    if zone is not None:
        zx, zy = zone
        c.rect(sx(zx), sy(1.0), sx(1.0) - sx(zx), sy(zy) - sy(1.0), "#d4f4d4")
        c.text(sx(zx) + 4, sy(1.0) + 14, "ideal zone")
    for x, y in points:
        c.circle(sx(x), sy(y), 2, PALETTE[0])
    return c.render()
