"""Evaluation protocol over the four seen/unseen settings, plus the ablation grid."""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..bnr import BnrUNet
from ..errors import ValidationError
from ..glyphdata import GlyphCorpus, GlyphImage
from ..metrics import GlyphClassifier, MetricsReport, evaluate
from .core import DiffusionPipeline
from .finetune import FREEZE_PLANS, finetune
from .generate import generate

# setting -> (manifest style attribute, manifest char attribute)
SETTING_POOLS: Dict[str, Tuple[str, str]] = {
    "scsf": ("seen_styles", "seen_chars"),
    "ucsf": ("seen_styles", "unseen_chars"),
    "scuf": ("unseen_styles", "seen_chars"),
    "ucuf": ("unseen_styles", "unseen_chars"),
}

ABLATION_PLANS: Tuple[str, ...] = ("no", "clip", "kv", "peft", "all")
ABLATION_ARMS: Tuple[str, ...] = ("nobnr", "bnr")


def _style_seed(seed: int, style_id: int) -> int:
    """Stable per-style child seed."""
    return int(np.random.SeedSequence([int(seed), 11, int(style_id)]).generate_state(1)[0])


def refs_for_style(
    corpus: GlyphCorpus, style_id: int, n_refs: int, seed: int
) -> List[GlyphImage]:
    """Fixed reference set for a style: ``n_refs`` seen chars, seeded draw."""
    seen = list(corpus.manifest.seen_chars)
    if n_refs < 1 or n_refs > len(seen):
        raise ValidationError(f"n_refs must lie in [1, {len(seen)}], got {n_refs}")
    rng = np.random.default_rng(_style_seed(seed, style_id))
    picks = rng.choice(len(seen), size=n_refs, replace=False)
    return [corpus.glyph(style_id, seen[i]) for i in sorted(picks)]


def setting_pools(manifest, setting: str) -> Tuple[List[int], List[int]]:
    """(style_ids, char_ids) a setting evaluates over."""
    if setting not in SETTING_POOLS:
        raise ValidationError(f"unknown setting {setting!r}; choose from {sorted(SETTING_POOLS)}")
    style_attr, char_attr = SETTING_POOLS[setting]
    return list(getattr(manifest, style_attr)), list(getattr(manifest, char_attr))


def evaluate_setting(
    pipeline: DiffusionPipeline,
    corpus: GlyphCorpus,
    classifier: GlyphClassifier,
    setting: str,
    seed: int = 0,
    refiner: Optional[BnrUNet] = None,
    threshold: float = 0.5,
    deterministic: bool = False,
    n_refs: Optional[int] = None,
    stride: Optional[int] = None,
    max_chars_per_style: Optional[int] = None,
) -> MetricsReport:
    """Generate and score every (style, char) pair one setting covers.

    Reference chars are excluded from the targets, so the episode invariant
    (references never contain the target) holds in every setting.
    """
    n_refs = pipeline.config.n_refs if n_refs is None else int(n_refs)
    styles, char_pool = setting_pools(corpus.manifest, setting)
    if not styles or not char_pool:
        raise ValidationError(f"setting {setting!r} has an empty style or char pool")
    generated: List[GlyphImage] = []
    targets: List[GlyphImage] = []
    for style_id in styles:
        refs = refs_for_style(corpus, style_id, n_refs, seed)
        ref_chars = {r.char_id for r in refs}
        chars = [c for c in char_pool if c not in ref_chars]
        if max_chars_per_style is not None:
            chars = chars[:max_chars_per_style]
        if not chars:
            raise ValidationError(
                f"style {style_id}: no target chars left after excluding references"
            )
        outputs = generate(
            pipeline,
            corpus,
            refs,
            chars,
            seed=_style_seed(seed, style_id),
            deterministic=deterministic,
            refiner=refiner,
            threshold=threshold,
            stride=stride,
        )
        generated.extend(outputs)
        targets.extend(corpus.glyph(style_id, c) for c in chars)
    return evaluate(generated, targets, setting, classifier)


def run_evaluation(
    pipeline: DiffusionPipeline,
    corpus: GlyphCorpus,
    classifier: GlyphClassifier,
    settings: Sequence[str],
    **kwargs,
) -> Dict[str, MetricsReport]:
    """Score several settings with shared options; see ``evaluate_setting``."""
    reports = {}
    for setting in settings:
        reports[setting] = evaluate_setting(pipeline, corpus, classifier, setting, **kwargs)
    return reports


def ablation_grid(
    pipeline: DiffusionPipeline,
    corpus: GlyphCorpus,
    classifier: GlyphClassifier,
    refiner: BnrUNet,
    threshold: float = 0.5,
    plans: Sequence[str] = ABLATION_PLANS,
    seed: int = 0,
    finetune_epochs: Optional[int] = None,
    n_refs: Optional[int] = None,
    stride: Optional[int] = None,
    deterministic: bool = False,
    max_chars_per_style: Optional[int] = None,
    log=None,
) -> Dict[Tuple[str, str], MetricsReport]:
    """Freeze-plan x refiner grid on the fully unseen cell.

    Each plan fine-tunes once per unseen style, generates one batch, and
    scores it twice: raw decodes (``nobnr``) and refined outputs (``bnr``).
    The refiner is a pure post-process, so both arms share one sampling pass.
    """
    for plan in plans:
        if plan not in FREEZE_PLANS:
            raise ValidationError(f"unknown plan {plan!r}; choose from {sorted(FREEZE_PLANS)}")
    say = log if log is not None else (lambda _msg: None)
    n_refs = pipeline.config.n_refs if n_refs is None else int(n_refs)
    manifest = corpus.manifest
    styles = list(manifest.unseen_styles)
    char_pool = list(manifest.unseen_chars)
    if not styles or not char_pool:
        raise ValidationError("ablation needs non-empty unseen style and char splits")
    grid: Dict[Tuple[str, str], MetricsReport] = {}
    for plan in plans:
        raw_all: List[GlyphImage] = []
        out_all: List[GlyphImage] = []
        tgt_all: List[GlyphImage] = []
        for style_id in styles:
            refs = refs_for_style(corpus, style_id, n_refs, seed)
            say(f"plan {plan}, style {style_id}: fine-tuning on {len(refs)} refs")
            tuned, _hist = finetune(
                pipeline, corpus, refs, plan, epochs=finetune_epochs, seed=seed
            )
            chars = list(char_pool)
            if max_chars_per_style is not None:
                chars = chars[:max_chars_per_style]
            outputs, raws = generate(
                tuned,
                corpus,
                refs,
                chars,
                seed=_style_seed(seed, style_id),
                deterministic=deterministic,
                refiner=refiner,
                threshold=threshold,
                stride=stride,
                return_raw=True,
            )
            out_all.extend(outputs)
            raw_all.extend(raws)
            tgt_all.extend(corpus.glyph(style_id, c) for c in chars)
        grid[(plan, "nobnr")] = evaluate(raw_all, tgt_all, "ucuf", classifier)
        grid[(plan, "bnr")] = evaluate(out_all, tgt_all, "ucuf", classifier)
        say(
            f"plan {plan}: ssim {grid[(plan, 'bnr')].aggregates['ssim']:.4f}, "
            f"ocr {grid[(plan, 'bnr')].aggregates['ocr_accuracy']:.4f}"
        )
    return grid


def check_ablation_ordering(
    grid: Dict[Tuple[str, str], MetricsReport], arm: str = "bnr"
) -> List[str]:
    """Expected-direction checks over the grid; returns violation messages.

    An empty list means the orderings held.  Violations are advisory: they
    describe where a small run landed off-trend, they do not raise.
    """
    if arm not in ABLATION_ARMS:
        raise ValidationError(f"unknown arm {arm!r}; choose from {ABLATION_ARMS}")
    problems: List[str] = []

    def agg(plan: str, key: str) -> Optional[float]:
        report = grid.get((plan, arm))
        return None if report is None else report.aggregates[key]

    peft_ssim, no_ssim = agg("peft", "ssim"), agg("no", "ssim")
    if peft_ssim is not None and no_ssim is not None and peft_ssim < no_ssim:
        problems.append(
            f"[{arm}] peft ssim {peft_ssim:.6f} < no-finetune ssim {no_ssim:.6f}"
        )
    all_ocr, peft_ocr = agg("all", "ocr_accuracy"), agg("peft", "ocr_accuracy")
    if all_ocr is not None and peft_ocr is not None and all_ocr > peft_ocr:
        problems.append(
            f"[{arm}] full fine-tune ocr {all_ocr:.6f} > peft ocr {peft_ocr:.6f} "
            "(full tuning is expected to overwrite content handling)"
        )
    return problems


def grid_to_dict(grid: Dict[Tuple[str, str], MetricsReport]) -> dict:
    """JSON-friendly view of an ablation grid, keyed ``plan/arm``."""
    return {f"{plan}/{arm}": report.to_dict() for (plan, arm), report in sorted(grid.items())}
