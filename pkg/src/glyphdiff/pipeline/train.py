"""Base training: codec first, then the conditional denoiser on cached latents."""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import torch

from ..codec import train_codec
from ..errors import NumericsError, ValidationError
from ..glyphdata import GlyphCorpus
from .core import DiffusionPipeline

LogFn = Callable[[str], None]


def _training_styles(manifest) -> List[int]:
    """Styles the base model may see: canonical plus the seen split."""
    return [manifest.canonical_style_id] + list(manifest.seen_styles)


def train_base(
    corpus: GlyphCorpus,
    config,
    log: Optional[LogFn] = None,
) -> Tuple[DiffusionPipeline, Dict[str, List[float]]]:
    """Full base-training run on the seen portion of the corpus.

    Trains the codec (when learned), freezes it, caches every training latent
    once, then optimizes the denoiser with per-sample random timesteps.
    Returns the pipeline plus loss histories keyed by phase.
    """
    manifest = corpus.manifest
    if corpus.size != config.image_size:
        raise ValidationError(f"corpus size {corpus.size} != config image_size {config.image_size}")
    seen_chars = list(manifest.seen_chars)
    seen_styles = list(manifest.seen_styles)
    if not seen_styles:
        raise ValidationError("corpus has no seen styles to train on")
    if len(seen_chars) < config.n_refs + 1:
        raise ValidationError(
            f"need more than n_refs={config.n_refs} seen chars, got {len(seen_chars)}"
        )
    say = log if log is not None else (lambda _msg: None)

    canonical = manifest.canonical_style_id
    codec_images = [
        corpus.image(sid, cid) for sid in _training_styles(manifest) for cid in seen_chars
    ]
    say(f"training codec ({config.codec_mode}) on {len(codec_images)} images")
    codec, codec_losses = train_codec(
        codec_images,
        mode=config.codec_mode,
        image_size=config.image_size,
        latent_channels=config.latent_channels,
        downsample=config.codec_downsample,
        epochs=config.codec_epochs,
        seed=config.seed,
    )
    for p in codec.parameters():
        p.requires_grad_(False)
    pipeline = DiffusionPipeline.build(config, codec=codec)

    # Codec is frozen from here on, so each latent is computed exactly once.
    latents: Dict[Tuple[int, int], torch.Tensor] = {}
    for sid in [canonical] + seen_styles:
        batch = pipeline.encode_images([corpus.image(sid, cid) for cid in seen_chars])
        for i, cid in enumerate(seen_chars):
            latents[(sid, cid)] = batch[i]

    pairs = [(sid, cid) for sid in seen_styles for cid in seen_chars]
    rng = np.random.default_rng(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    opt = torch.optim.Adam(pipeline.model.parameters(), lr=config.learning_rate)
    step_losses: List[float] = []
    epoch_losses: List[float] = []
    timesteps = pipeline.schedule.timesteps
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        total, count = 0.0, 0
        for lo in range(0, len(pairs), config.batch_size):
            chunk = [pairs[i] for i in order[lo : lo + config.batch_size]]
            z0 = torch.stack([latents[key] for key in chunk])
            z_x = torch.stack([latents[(canonical, cid)] for _sid, cid in chunk])
            ref_sets = []
            for sid, cid in chunk:
                pool = [c for c in seen_chars if c != cid]
                picks = rng.choice(len(pool), size=config.n_refs, replace=False)
                ref_sets.append([corpus.image(sid, pool[i]) for i in picks])
            refs = pipeline.refs_tensor(ref_sets)
            t = torch.randint(1, timesteps + 1, (z0.shape[0],), generator=gen)
            eps = torch.randn(z0.shape, generator=gen, dtype=z0.dtype)
            z_t = pipeline.add_noise(z0, t, eps)
            pipeline.model.train()
            tokens = pipeline.model.style_tokens(refs)
            pred = pipeline.model.denoise(z_t, z_x, t, tokens)
            loss = torch.mean((pred - z0) ** 2)
            if not torch.isfinite(loss):
                raise NumericsError(f"diffusion loss is not finite at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            step_losses.append(loss.item())
            total += loss.item() * len(chunk)
            count += len(chunk)
        epoch_losses.append(total / count)
        say(f"epoch {epoch + 1}/{config.epochs}: loss {epoch_losses[-1]:.5f}")
    pipeline.model.eval()
    history = {
        "codec_losses": codec_losses,
        "step_losses": step_losses,
        "epoch_losses": epoch_losses,
    }
    return pipeline, history
