"""Top-down SVG drawings of scenes with byte-stable output."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .data import Scene

# 20-colour qualitative palette (matplotlib tab20)
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94",
    "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
)


def class_color(class_id: int) -> str:
    return PALETTE[class_id % len(PALETTE)]


def _fmt(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _points(pts) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)


def render_svg(scene: Scene, scale: float = 60.0, margin: float = 0.5, legend_width: float = 180.0) -> str:
    """Floor polygon, rotated object footprints coloured by class, and a class legend.

    World x maps to the right and world z downwards.
    """
    floor = np.asarray(scene.floor, dtype=float)
    pts = [floor] + [o.footprint() for o in scene.objects]
    allp = np.concatenate(pts)
    lo = allp.min(axis=0) - margin
    hi = allp.max(axis=0) + margin

    def tx(p):
        return (np.asarray(p) - lo) * scale

    width = (hi[0] - lo[0]) * scale
    height = (hi[1] - lo[1]) * scale
    present = sorted({o.class_id for o in scene.objects})
    total_w = width + (legend_width if present else 0.0)
    total_h = max(height, 20.0 * len(present) + 20.0)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(total_w)}" height="{_fmt(total_h)}" '
        f'viewBox="0 0 {_fmt(total_w)} {_fmt(total_h)}">',
        f'<rect x="0" y="0" width="{_fmt(total_w)}" height="{_fmt(total_h)}" fill="#ffffff"/>',
        f'<polygon class="floor" points="{_points(tx(floor))}" fill="#efe9dc" stroke="#444444" stroke-width="2"/>',
    ]
    for i, o in enumerate(scene.objects):
        name = escape(scene.classes[o.class_id], {'"': "&quot;"})
        out.append(f'<polygon class="object" data-index="{i}" data-class="{name}" '
                   f'points="{_points(tx(o.footprint()))}" fill="{class_color(o.class_id)}" '
                   f'fill-opacity="0.8" stroke="#222222" stroke-width="1"/>')
    if present:
        x0 = width + 10.0
        out.append('<g class="legend" font-family="sans-serif" font-size="12">')
        for k, c in enumerate(present):
            y = 10.0 + 20.0 * k
            out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y)}" width="14" height="14" fill="{class_color(c)}" '
                       f'stroke="#222222" stroke-width="1"/>')
            out.append(f'<text x="{_fmt(x0 + 20)}" y="{_fmt(y + 11)}">{escape(scene.classes[c])}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
