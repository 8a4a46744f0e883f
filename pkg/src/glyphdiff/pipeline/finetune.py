"""Few-shot fine-tuning with selectable parameter-freeze plans.

A plan names which parameter groups stay trainable; everything else is
frozen.  Training pairs are enumerated from the reference set itself: every
reference becomes a target conditioned on each non-empty subset of the
remaining references.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
import torch

from ..backbone import GROUP_KV, GROUP_OTHERS, GROUP_STYLE_PROJ, GROUP_TRANS, PARAMETER_GROUPS
from ..errors import NumericsError, ValidationError
from ..glyphdata import GlyphCorpus, GlyphImage, enumerate_finetune_pairs, finetune_pair_count
from ..metrics.classifier import images_to_tensor
from .core import DiffusionPipeline

# Plan name -> parameter groups left trainable.
FREEZE_PLANS: Dict[str, frozenset] = {
    "no": frozenset(),
    "clip": frozenset({GROUP_STYLE_PROJ}),
    "kv": frozenset({GROUP_KV}),
    "peft": frozenset({GROUP_KV, GROUP_TRANS, GROUP_STYLE_PROJ}),
    "all": frozenset(PARAMETER_GROUPS),
}


def trainable_parameter_names(groups: Dict[str, str], plan: str) -> Set[str]:
    """Parameter names a plan leaves trainable, given the name -> group map."""
    if plan not in FREEZE_PLANS:
        raise ValidationError(f"unknown plan {plan!r}; choose from {sorted(FREEZE_PLANS)}")
    allowed = FREEZE_PLANS[plan]
    return {name for name, group in groups.items() if group in allowed}


def _check_references(references: Sequence[GlyphImage]) -> None:
    if not references:
        raise ValidationError("need at least one reference image")
    chars = [ref.char_id for ref in references]
    if len(set(chars)) != len(chars):
        raise ValidationError(f"reference chars must be distinct, got {chars}")
    styles = {ref.style_id for ref in references}
    if len(styles) != 1:
        raise ValidationError(f"references must share one style, got styles {sorted(styles)}")
    if len(references) < 2:
        raise ValidationError(
            "a single reference yields "
            f"{finetune_pair_count(1)} training pairs; need at least 2 references"
        )


def finetune(
    pipeline: DiffusionPipeline,
    corpus: GlyphCorpus,
    references: Sequence[GlyphImage],
    plan: str,
    epochs: Optional[int] = None,
    lr: Optional[float] = None,
    batch_size: Optional[int] = None,
    seed: int = 0,
    log=None,
) -> Tuple[DiffusionPipeline, Dict[str, List[float]]]:
    """Adapt a trained pipeline to one new style from a handful of references.

    Returns a tuned copy; the input pipeline is left untouched.  Plan ``no``
    skips training entirely and returns a plain copy.
    """
    if plan not in FREEZE_PLANS:
        raise ValidationError(f"unknown plan {plan!r}; choose from {sorted(FREEZE_PLANS)}")
    config = pipeline.config
    epochs = config.finetune_epochs if epochs is None else int(epochs)
    lr = config.finetune_learning_rate if lr is None else float(lr)
    batch_size = config.batch_size if batch_size is None else int(batch_size)
    if epochs < 1 or batch_size < 1:
        raise ValidationError("epochs and batch_size must be positive")
    say = log if log is not None else (lambda _msg: None)

    tuned = pipeline.clone()
    if plan == "no":
        tuned.model.eval()
        return tuned, {"step_losses": [], "epoch_losses": []}

    _check_references(references)
    pairs = enumerate_finetune_pairs(references)
    say(f"plan {plan}: {len(pairs)} pairs from {len(references)} references")

    trainable = trainable_parameter_names(tuned.groups, plan)
    for name, param in tuned.model.named_parameters():
        param.requires_grad_(name in trainable)
    params = [p for p in tuned.model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=lr)

    # Codec is frozen, so per-char latents are computed once up front.
    canonical = corpus.manifest.canonical_style_id
    ref_chars = [ref.char_id for ref in references]
    target_latents: Dict[int, torch.Tensor] = {}
    source_latents: Dict[int, torch.Tensor] = {}
    tgt_batch = tuned.encode_images(references)
    src_batch = tuned.encode_images([corpus.image(canonical, cid) for cid in ref_chars])
    for i, cid in enumerate(ref_chars):
        target_latents[cid] = tgt_batch[i]
        source_latents[cid] = src_batch[i]

    # The style trunk sits in the shared-plumbing group; when that group is
    # frozen its per-reference features never change, so cache them.
    trunk_trainable = GROUP_OTHERS in FREEZE_PLANS[plan]
    trunk_feats: Dict[int, torch.Tensor] = {}
    if not trunk_trainable:
        with torch.no_grad():
            feats = tuned.model.style_encoder.trunk_features(images_to_tensor(references))
        for i, cid in enumerate(ref_chars):
            trunk_feats[cid] = feats[i]

    buckets: Dict[int, list] = {}
    for pair in pairs:
        buckets.setdefault(len(pair.references), []).append(pair)

    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    timesteps = tuned.schedule.timesteps
    step_losses: List[float] = []
    epoch_losses: List[float] = []
    tuned.model.train()
    for epoch in range(epochs):
        total, count = 0.0, 0
        for k in sorted(buckets):
            bucket = buckets[k]
            order = rng.permutation(len(bucket))
            for lo in range(0, len(bucket), batch_size):
                chunk = [bucket[i] for i in order[lo : lo + batch_size]]
                z0 = torch.stack([target_latents[p.target.char_id] for p in chunk])
                z_x = torch.stack([source_latents[p.target.char_id] for p in chunk])
                if trunk_trainable:
                    refs = tuned.refs_tensor([[r for r in p.references] for p in chunk])
                    tokens = tuned.model.style_tokens(refs)
                else:
                    feats = torch.stack(
                        [torch.stack([trunk_feats[r.char_id] for r in p.references]) for p in chunk]
                    )
                    tokens = tuned.model.style_encoder.proj(feats)
                t = torch.randint(1, timesteps + 1, (z0.shape[0],), generator=gen)
                eps = torch.randn(z0.shape, generator=gen, dtype=z0.dtype)
                z_t = tuned.add_noise(z0, t, eps)
                pred = tuned.model.denoise(z_t, z_x, t, tokens)
                loss = torch.mean((pred - z0) ** 2)
                if not torch.isfinite(loss):
                    raise NumericsError(f"fine-tune loss is not finite at epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                step_losses.append(loss.item())
                total += loss.item() * len(chunk)
                count += len(chunk)
        epoch_losses.append(total / count)
        say(f"epoch {epoch + 1}/{epochs}: loss {epoch_losses[-1]:.5f}")
    tuned.model.eval()
    for param in tuned.model.parameters():
        param.requires_grad_(True)
    return tuned, {"step_losses": step_losses, "epoch_losses": epoch_losses}
