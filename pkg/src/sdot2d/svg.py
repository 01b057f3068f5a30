"""Deterministic SVG rendering of tessellation records.

The bounding box of the domain is mapped onto a 1000 x 1000 canvas with a
uniform scale, keeping the aspect ratio, and the y axis is flipped so the
picture has mathematical orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import ConfigError, TessellationRecord
from .model import Violation, domain_from_dict

__all__ = ["SvgOptions", "render_svg", "PALETTE"]

CANVAS = 1000.0

PALETTE = (
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462",
    "#b3de69", "#fccde5", "#d9d9d9", "#bc80bd", "#ccebc5", "#ffed6f",
)


@dataclass(frozen=True)
class SvgOptions:
    margin: float = 20.0
    marker_radius: float = 5.0
    stroke_width: float = 1.5
    show_labels: bool = False


def _fmt(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class _Frame:
    def __init__(self, bbox, margin: float):
        x0, y0, x1, y1 = bbox
        span = max(x1 - x0, y1 - y0)
        self.scale = (CANVAS - 2 * margin) / span
        self.ox = margin + 0.5 * ((CANVAS - 2 * margin) - self.scale * (x1 - x0)) - self.scale * x0
        self.oy = margin + 0.5 * ((CANVAS - 2 * margin) - self.scale * (y1 - y0)) + self.scale * y1

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.column_stack([self.ox + self.scale * pts[:, 0], self.oy - self.scale * pts[:, 1]])


def _path(pts: np.ndarray) -> str:
    head = f"M{_fmt(pts[0, 0])},{_fmt(pts[0, 1])}"
    return head + "".join(f" L{_fmt(x)},{_fmt(y)}" for x, y in pts[1:]) + " Z"


def _coerce(record) -> TessellationRecord:
    if isinstance(record, TessellationRecord):
        record = record.to_dict()
    rec = TessellationRecord.from_dict(record)
    for c in rec.cells:
        if not c["arcs"]:
            raise ConfigError([Violation("schema", f"cell {c['index']} has no arcs")])
        for a in c["arcs"]:
            if len(a["points"]) < 2:
                raise ConfigError([Violation("schema", f"cell {c['index']} has an empty arc")])
    return rec


def render_svg(record, options: SvgOptions | None = None) -> str:
    """SVG document for a record (a :class:`TessellationRecord` or its dict form).

    Arc polylines are drawn as stored in the record, so their angular density
    is the sampling chosen when the record was written.  Raises
    :class:`~sdot2d.io.ConfigError` for records that fail validation.
    """
    options = options or SvgOptions()
    rec = _coerce(record)
    domain = domain_from_dict(rec.domain)
    frame = _Frame(domain.bbox, options.margin)
    c = _fmt(CANVAS)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{c}" height="{c}" viewBox="0 0 {c} {c}">',
        f'<rect x="0" y="0" width="{c}" height="{c}" fill="white"/>',
        '<g id="cells">',
    ]
    for cell in sorted(rec.cells, key=lambda d: d["index"]):
        i = cell["index"]
        pts = np.vstack([np.asarray(a["points"], dtype=float) for a in cell["arcs"]])
        color = PALETTE[i % len(PALETTE)]
        out.append(
            f'<path id="cell-{i}" d="{_path(frame(pts))}" fill="{color}" stroke="black" '
            f'stroke-width="{_fmt(options.stroke_width)}" stroke-linejoin="round"/>'
        )
    out.append("</g>")
    outline = frame(domain.outline())
    out.append(f'<path id="domain" d="{_path(outline)}" fill="none" stroke="black" '
               f'stroke-width="{_fmt(2 * options.stroke_width)}"/>')
    out.append('<g id="targets">')
    for i, y in enumerate(frame(rec.targets)):
        out.append(f'<circle cx="{_fmt(y[0])}" cy="{_fmt(y[1])}" r="{_fmt(options.marker_radius)}" fill="black"/>')
        if options.show_labels:
            out.append(f'<text x="{_fmt(y[0] + 8)}" y="{_fmt(y[1] - 8)}" font-size="18">{i + 1}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
