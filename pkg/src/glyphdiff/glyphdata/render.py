"""Rasterization of stroke skeletons into grayscale glyph images.

Convention throughout the package: pixels are float32 in [0, 1], 0 is ink
and 1 is background. Rendering is a pure function of (spec, style, size);
the only randomness (connectivity bridges, speckle) is drawn from a stream
seeded solely by (char_id, style_id).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from ..errors import ConfigurationError, ValidationError
from .specs import GlyphSpec, StyleSpec, Stroke, seeded_rng

VALID_SIZES = (32, 64, 128)

# Strokes are drawn on a 4x supersampled canvas and box-downsampled, so
# intermediate gray values appear only in cells the stroke partially covers.
_SUPERSAMPLE = 4
_PAD = 0.08


@dataclass(frozen=True, eq=False)
class GlyphImage:
    """One rendered glyph with its identity tags."""

    pixels: np.ndarray
    char_id: int
    style_id: int

    @property
    def size(self) -> int:
        return int(self.pixels.shape[0])


def _stroke_width_px(style: StyleSpec, stroke: Stroke, canvas: int) -> int:
    # Contrast thickens vertical-ish strokes and thins horizontal-ish ones.
    (x0, y0), (x1, y1) = stroke[0], stroke[-1]
    vertical = abs(y1 - y0) >= abs(x1 - x0)
    factor = 1.0 + 0.45 * style.contrast if vertical else 1.0 - 0.45 * style.contrast
    return max(1, round(style.stroke_width * canvas * factor))


def render_glyph(spec: GlyphSpec, style: StyleSpec, size: int) -> GlyphImage:
    """Rasterize ``spec`` under ``style`` at ``size`` x ``size`` pixels."""
    if size not in VALID_SIZES:
        raise ConfigurationError(f"size must be one of {VALID_SIZES}, got {size}")
    if len(spec.strokes) == 0:
        raise ValidationError("cannot render a glyph with no strokes")

    canvas_px = size * _SUPERSAMPLE
    canvas = Image.new("L", (canvas_px, canvas_px), 255)
    draw = ImageDraw.Draw(canvas)
    rng = seeded_rng(spec.char_id, 3, style.style_id)

    def to_px(x: float, y: float) -> tuple[float, float]:
        # Shear for slant, recompress to keep sheared points inside the box,
        # then map the unit square into the padded canvas.
        xs = x + style.slant * (0.5 - y)
        xs = 0.5 + (xs - 0.5) / (1.0 + 0.5 * abs(style.slant))
        return (
            (_PAD + xs * (1.0 - 2.0 * _PAD)) * canvas_px,
            (_PAD + y * (1.0 - 2.0 * _PAD)) * canvas_px,
        )

    for stroke in spec.strokes:
        pts = [to_px(x, y) for x, y in stroke]
        width = _stroke_width_px(style, stroke, canvas_px)
        draw.line(pts, fill=0, width=width, joint="curve")
        if style.roundness == "round":
            r = width / 2.0
            for cx, cy in (pts[0], pts[-1]):
                draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=0)

    # Bridging consumes one draw per stroke pair regardless of outcome so the
    # stream offset (and hence speckle) does not depend on connectivity.
    bridge_width = max(1, round(style.stroke_width * canvas_px * 0.8))
    for prev, nxt in zip(spec.strokes, spec.strokes[1:]):
        if rng.random() < style.connectivity:
            draw.line([to_px(*prev[-1]), to_px(*nxt[0])], fill=0, width=bridge_width)

    small = canvas.resize((size, size), Image.BOX)
    arr = np.asarray(small, dtype=np.float32) / np.float32(255.0)

    if style.speckle > 0.0:
        background = arr >= 1.0
        hits = rng.random(arr.shape) < style.speckle
        values = (0.3 + 0.55 * rng.random(arr.shape)).astype(np.float32)
        sel = background & hits
        arr[sel] = values[sel]

    return GlyphImage(pixels=arr, char_id=spec.char_id, style_id=style.style_id)
