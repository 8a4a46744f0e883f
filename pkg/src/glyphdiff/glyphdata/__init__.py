"""Synthetic glyph corpus: spec generation, rasterization, datasets, episodes."""

from .specs import CANONICAL_STYLE_FIELDS, GlyphSpec, StyleSpec, canonical_style, random_glyph_spec, random_style_spec
from .render import GlyphImage, render_glyph
from .dataset import (
    DatasetManifest,
    GlyphCorpus,
    SplitRatios,
    build_dataset,
    ingest_dataset,
    load_image,
    save_image,
)
from .episodes import (
    Episode,
    FinetunePair,
    enumerate_finetune_pairs,
    finetune_pair_count,
    sample_episode,
)

__all__ = [
    "CANONICAL_STYLE_FIELDS",
    "GlyphSpec",
    "StyleSpec",
    "canonical_style",
    "random_glyph_spec",
    "random_style_spec",
    "GlyphImage",
    "render_glyph",
    "DatasetManifest",
    "GlyphCorpus",
    "SplitRatios",
    "build_dataset",
    "ingest_dataset",
    "load_image",
    "save_image",
    "Episode",
    "FinetunePair",
    "enumerate_finetune_pairs",
    "finetune_pair_count",
    "sample_episode",
]
