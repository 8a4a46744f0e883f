"""Episode sampling and fine-tuning pair enumeration.

An episode pairs a canonical-style source glyph with the same character in a
target style, plus N reference glyphs of other characters in that style. The
fine-tuning enumeration expands N references into every (target, non-empty
subset of the rest) combination: n * (2^(n-1) - 1) pairs for n references.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ValidationError
from .dataset import GlyphCorpus
from .render import GlyphImage


@dataclass(frozen=True, eq=False)
class Episode:
    """Source (canonical render), target, and same-style references."""

    source: GlyphImage
    target: GlyphImage
    references: tuple[GlyphImage, ...]


@dataclass(frozen=True, eq=False)
class FinetunePair:
    """One fine-tuning example: a target plus the reference subset conditioning it."""

    target: GlyphImage
    references: tuple[GlyphImage, ...]


def sample_episode(
    corpus: GlyphCorpus,
    style_id: int,
    target_char_id: int,
    n_refs: int,
    rng: np.random.Generator,
    char_pool: Sequence[int] | None = None,
) -> Episode:
    """Draw one training episode with uniformly sampled reference characters.

    References are chosen without replacement from ``char_pool`` (default:
    every character in the corpus) minus the target character. The canonical
    style is reserved for sources and may not be the target style.
    """
    manifest = corpus.manifest
    if style_id not in manifest.style_ids:
        raise ValidationError(f"unknown style_id {style_id}")
    if target_char_id not in manifest.char_ids:
        raise ValidationError(f"unknown char_id {target_char_id}")
    if style_id == manifest.canonical_style_id:
        raise ValidationError("the canonical style is source-only and cannot be a target style")

    pool = list(char_pool) if char_pool is not None else list(manifest.char_ids)
    for cid in pool:
        if cid not in manifest.char_ids:
            raise ValidationError(f"char_pool contains unknown char_id {cid}")
    candidates = [cid for cid in pool if cid != target_char_id]
    if n_refs < 1:
        raise ValidationError(f"n_refs must be >= 1, got {n_refs}")
    if n_refs > len(candidates):
        raise ValidationError(
            f"n_refs={n_refs} exceeds the {len(candidates)} non-target characters available"
        )

    chosen = rng.choice(len(candidates), size=n_refs, replace=False)
    ref_ids = [candidates[int(i)] for i in chosen]
    return Episode(
        source=corpus.glyph(manifest.canonical_style_id, target_char_id),
        target=corpus.glyph(style_id, target_char_id),
        references=tuple(corpus.glyph(style_id, cid) for cid in ref_ids),
    )


def enumerate_finetune_pairs(references: Sequence[GlyphImage]) -> list[FinetunePair]:
    """Expand references into all (target, non-empty subset of the rest) pairs.

    Deterministic order: targets in input order; for each target, subsets of
    the remaining references by ascending bitmask over their input positions.
    A single reference yields zero pairs.
    """
    refs = list(references)
    char_ids = [g.char_id for g in refs]
    if len(set(char_ids)) != len(char_ids):
        raise ValidationError(f"reference char_ids must be distinct, got {char_ids}")
    style_ids = {g.style_id for g in refs}
    if len(style_ids) > 1:
        raise ValidationError(f"references must share one style, got styles {sorted(style_ids)}")
    if len(refs) == 0:
        raise ValidationError("need at least one reference")

    pairs: list[FinetunePair] = []
    for ti, target in enumerate(refs):
        others = refs[:ti] + refs[ti + 1 :]
        for mask in range(1, 1 << len(others)):
            subset = tuple(others[j] for j in range(len(others)) if mask >> j & 1)
            pairs.append(FinetunePair(target=target, references=subset))
    return pairs


def finetune_pair_count(n_refs: int) -> int:
    """Closed-form pair count for ``n_refs`` references."""
    if n_refs < 1:
        raise ValidationError(f"n_refs must be >= 1, got {n_refs}")
    return n_refs * (2 ** (n_refs - 1) - 1)
