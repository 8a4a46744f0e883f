"""Glyph and style records plus their seeded random generators.

A glyph is a set of polyline strokes in the unit square (y grows downward).
A style bundles the rendering attributes that vary across fonts. Both are
plain frozen dataclasses so they can be hashed, compared, and serialized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ValidationError

Point = tuple[float, float]
Stroke = tuple[Point, ...]

ROUNDNESS_VALUES = ("butt", "round")

# Attribute values defining the canonical (source) style.
CANONICAL_STYLE_FIELDS = dict(
    stroke_width=0.06,
    slant=0.0,
    roundness="round",
    connectivity=0.0,
    contrast=0.0,
    speckle=0.0,
)


@dataclass(frozen=True)
class GlyphSpec:
    """Character identity plus its stroke skeleton."""

    char_id: int
    strokes: tuple[Stroke, ...]

    def __post_init__(self) -> None:
        if self.char_id < 0:
            raise ValidationError(f"char_id must be >= 0, got {self.char_id}")
        if len(self.strokes) == 0:
            raise ValidationError("glyph needs at least one stroke")
        for stroke in self.strokes:
            if len(stroke) < 2:
                raise ValidationError("every stroke needs at least two points")
            for x, y in stroke:
                if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                    raise ValidationError(f"stroke point ({x}, {y}) outside the unit square")


@dataclass(frozen=True)
class StyleSpec:
    """Rendering attributes of one font style."""

    style_id: int
    stroke_width: float
    slant: float
    roundness: str
    connectivity: float
    contrast: float
    speckle: float

    def __post_init__(self) -> None:
        if self.style_id < 0:
            raise ValidationError(f"style_id must be >= 0, got {self.style_id}")
        if not 0.0 < self.stroke_width <= 0.25:
            raise ValidationError(f"stroke_width must lie in (0, 0.25], got {self.stroke_width}")
        if not -0.5 <= self.slant <= 0.5:
            raise ValidationError(f"slant must lie in [-0.5, 0.5], got {self.slant}")
        if self.roundness not in ROUNDNESS_VALUES:
            raise ValidationError(f"roundness must be one of {ROUNDNESS_VALUES}, got {self.roundness!r}")
        if not 0.0 <= self.connectivity <= 1.0:
            raise ValidationError(f"connectivity must lie in [0, 1], got {self.connectivity}")
        if not 0.0 <= self.contrast <= 1.0:
            raise ValidationError(f"contrast must lie in [0, 1], got {self.contrast}")
        if not 0.0 <= self.speckle <= 0.05:
            raise ValidationError(f"speckle must lie in [0, 0.05], got {self.speckle}")


def canonical_style(style_id: int = 0) -> StyleSpec:
    """The fixed neutral style used for all source renders."""
    return StyleSpec(style_id=style_id, **CANONICAL_STYLE_FIELDS)


def _rng_for(seed: int, *key: int) -> np.random.Generator:
    # SeedSequence mixes the components; distinct keys give independent streams.
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(k) for k in key]))


def random_glyph_spec(char_id: int, seed: int) -> GlyphSpec:
    """Draw a stroke skeleton for ``char_id``, deterministic in (seed, char_id).

    Skeletons mix axis-aligned bars, diagonals, and bent polylines so distinct
    char_ids stay visually separable at small raster sizes.
    """
    rng = _rng_for(seed, 1, char_id)
    n_strokes = int(rng.integers(3, 9))
    strokes: list[Stroke] = []
    for _ in range(n_strokes):
        kind = int(rng.integers(0, 4))
        lo, hi = 0.08, 0.92
        if kind == 0:
            # Horizontal bar.
            y = float(rng.uniform(lo, hi))
            x0 = float(rng.uniform(lo, 0.55))
            x1 = float(min(hi, x0 + rng.uniform(0.3, 0.8)))
            strokes.append(((x0, y), (x1, y)))
        elif kind == 1:
            # Vertical bar.
            x = float(rng.uniform(lo, hi))
            y0 = float(rng.uniform(lo, 0.55))
            y1 = float(min(hi, y0 + rng.uniform(0.3, 0.8)))
            strokes.append(((x, y0), (x, y1)))
        elif kind == 2:
            # Diagonal.
            x0, y0 = (float(v) for v in rng.uniform(lo, hi, size=2))
            ang = float(rng.uniform(0, 2 * np.pi))
            r = float(rng.uniform(0.3, 0.7))
            x1 = float(np.clip(x0 + r * np.cos(ang), lo, hi))
            y1 = float(np.clip(y0 + r * np.sin(ang), lo, hi))
            strokes.append(((x0, y0), (x1, y1)))
        else:
            # Bent three-point polyline.
            pts = rng.uniform(lo, hi, size=(3, 2))
            strokes.append(tuple((float(x), float(y)) for x, y in pts))
    return GlyphSpec(char_id=char_id, strokes=tuple(strokes))


def random_style_spec(style_id: int, seed: int) -> StyleSpec:
    """Draw style attributes for ``style_id``, deterministic in (seed, style_id)."""
    rng = _rng_for(seed, 2, style_id)
    speckle = float(rng.uniform(0.0, 0.015)) if rng.random() < 0.5 else 0.0
    return StyleSpec(
        style_id=style_id,
        stroke_width=float(rng.uniform(0.03, 0.12)),
        slant=float(rng.uniform(-0.3, 0.3)),
        roundness=str(rng.choice(ROUNDNESS_VALUES)),
        connectivity=float(rng.uniform(0.0, 0.8)),
        contrast=float(rng.uniform(0.0, 1.0)),
        speckle=speckle,
    )


def spec_to_dict(spec: GlyphSpec) -> dict:
    return {"char_id": spec.char_id, "strokes": [[list(p) for p in s] for s in spec.strokes]}


def spec_from_dict(data: dict) -> GlyphSpec:
    strokes = tuple(tuple((float(x), float(y)) for x, y in s) for s in data["strokes"])
    return GlyphSpec(char_id=int(data["char_id"]), strokes=strokes)


def style_to_dict(style: StyleSpec) -> dict:
    return {
        "style_id": style.style_id,
        "stroke_width": style.stroke_width,
        "slant": style.slant,
        "roundness": style.roundness,
        "connectivity": style.connectivity,
        "contrast": style.contrast,
        "speckle": style.speckle,
    }


def style_from_dict(data: dict) -> StyleSpec:
    return StyleSpec(
        style_id=int(data["style_id"]),
        stroke_width=float(data["stroke_width"]),
        slant=float(data["slant"]),
        roundness=str(data["roundness"]),
        connectivity=float(data["connectivity"]),
        contrast=float(data["contrast"]),
        speckle=float(data["speckle"]),
    )


def seeded_rng(seed: int, *key: int) -> np.random.Generator:
    """Public helper: independent generator for (seed, key...) tuples."""
    return _rng_for(seed, *key)


def validate_strokes(strokes: Sequence[Stroke]) -> None:
    """Raise ValidationError unless strokes form a legal skeleton."""
    GlyphSpec(char_id=0, strokes=tuple(tuple(p for p in s) for s in strokes))
