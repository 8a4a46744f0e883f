"""Glyph generation: reverse sampling conditioned on content and style."""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from ..bnr import BnrUNet, bnr_forward
from ..errors import ValidationError
from ..glyphdata import GlyphCorpus, GlyphImage, save_image
from ..metrics.classifier import images_to_tensor
from .core import DiffusionPipeline


def _to_glyphs(px: torch.Tensor, char_ids: Sequence[int], style_id: int) -> List[GlyphImage]:
    arr = px.detach().cpu().numpy().astype(np.float32)
    return [
        GlyphImage(pixels=np.clip(arr[i, 0], 0.0, 1.0), char_id=int(cid), style_id=int(style_id))
        for i, cid in enumerate(char_ids)
    ]


def generate(
    pipeline: DiffusionPipeline,
    corpus: GlyphCorpus,
    references: Sequence[GlyphImage],
    char_ids: Sequence[int],
    seed: int = 0,
    deterministic: bool = False,
    refiner: Optional[BnrUNet] = None,
    threshold: float = 0.5,
    stride: Optional[int] = None,
    return_raw: bool = False,
) -> Union[List[GlyphImage], Tuple[List[GlyphImage], List[GlyphImage]]]:
    """Generate ``char_ids`` in the references' style.

    Content comes from the canonical rendering of each char; style comes from
    the reference tokens.  With ``return_raw`` the un-refined decodes are
    returned alongside the final outputs (they are identical when no refiner
    is given).
    """
    if not references:
        raise ValidationError("need at least one style reference")
    styles = {ref.style_id for ref in references}
    if len(styles) != 1:
        raise ValidationError(f"references must share one style, got {sorted(styles)}")
    style_id = styles.pop()
    char_ids = [int(c) for c in char_ids]
    if not char_ids:
        raise ValidationError("need at least one char to generate")
    ref_chars = {ref.char_id for ref in references}
    overlap = ref_chars.intersection(char_ids)
    if overlap:
        raise ValidationError(f"targets must not appear among the references: {sorted(overlap)}")
    canonical = pipeline_canonical(pipeline, corpus)
    sources = [corpus.image(canonical, cid) for cid in char_ids]

    gen = torch.Generator().manual_seed(seed)
    z_x = pipeline.encode_images(sources)
    pipeline.model.eval()
    with torch.no_grad():
        tokens = pipeline.model.style_tokens(pipeline.refs_tensor([list(references)]))
        tokens = tokens.expand(len(char_ids), -1, -1)
        z0 = pipeline.sample_latents(z_x, tokens, gen, deterministic=deterministic, stride=stride)
        raw_px = pipeline.decode_latents(z0)
        if refiner is not None:
            src_px = images_to_tensor(sources, pipeline.config.image_size)
            out_px = bnr_forward(raw_px, src_px, refiner, threshold)
        else:
            out_px = raw_px
    outputs = _to_glyphs(out_px, char_ids, style_id)
    if return_raw:
        return outputs, _to_glyphs(raw_px, char_ids, style_id)
    return outputs


def pipeline_canonical(pipeline: DiffusionPipeline, corpus: GlyphCorpus) -> int:
    """Canonical style id, with a size cross-check between pipeline and corpus."""
    if corpus.size != pipeline.config.image_size:
        raise ValidationError(
            f"corpus size {corpus.size} != pipeline image size {pipeline.config.image_size}"
        )
    return corpus.manifest.canonical_style_id


def save_comparison_grid(
    path: Union[str, Path],
    rows: Sequence[Sequence[GlyphImage]],
    gap: int = 2,
) -> None:
    """Write rows of glyphs as one grid PNG (row-major, white separators)."""
    if not rows or not rows[0]:
        raise ValidationError("grid needs at least one row with one image")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValidationError("all grid rows must have equal length")
    size = rows[0][0].pixels.shape[0]
    h = len(rows) * size + (len(rows) - 1) * gap
    w = width * size + (width - 1) * gap
    canvas = np.ones((h, w), dtype=np.float32)
    for i, row in enumerate(rows):
        for j, glyph in enumerate(row):
            if glyph.pixels.shape != (size, size):
                raise ValidationError("grid images must share one size")
            y, x = i * (size + gap), j * (size + gap)
            canvas[y : y + size, x : x + size] = glyph.pixels
    save_image(canvas, path)
