"""Assembled latent-diffusion pipeline and its on-disk checkpoint layout.

A pipeline bundles the image codec, the conditional denoiser, the noise
schedule, and the training configuration.  Checkpoints live in a directory
with one file per component so that the codec, backbone, classifier, and
refiner can be saved and reloaded independently.
"""

from __future__ import annotations

import copy
import os
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from ..backbone import GlyphDenoiser, partition_parameters
from ..ckptio import load_checkpoint, load_state_dict, save_checkpoint, state_dict_tensors
from ..codec import GlyphCodec, load_codec, save_codec
from ..config import TrainConfig
from ..diffusion import (
    NoiseSchedule,
    make_schedule,
    posterior_coefficients,
    sampling_timesteps,
    schedule_from_descriptor,
)
from ..errors import StateError, ValidationError
from ..metrics.classifier import images_to_tensor

CODEC_FILE = "codec.ckpt"
BACKBONE_FILE = "backbone.ckpt"
CLASSIFIER_FILE = "classifier.ckpt"
BNR_FILE = "bnr.ckpt"

_BACKBONE_KIND = "glyph-backbone"
_BACKBONE_VERSION = 1


class DiffusionPipeline:
    """Codec + denoiser + schedule, glued to one configuration."""

    def __init__(
        self,
        config: TrainConfig,
        codec: GlyphCodec,
        model: GlyphDenoiser,
        schedule: NoiseSchedule,
        groups: Optional[Dict[str, str]] = None,
    ) -> None:
        if codec.image_size != config.image_size:
            raise ValidationError(
                f"codec image size {codec.image_size} != config {config.image_size}"
            )
        if schedule.timesteps != config.timesteps:
            raise ValidationError(
                f"schedule has {schedule.timesteps} steps, config wants {config.timesteps}"
            )
        self.config = config
        self.codec = codec
        self.model = model
        self.schedule = schedule
        self.groups = dict(groups) if groups is not None else partition_parameters(model)

    @classmethod
    def build(cls, config: TrainConfig, codec: Optional[GlyphCodec] = None) -> "DiffusionPipeline":
        """Construct a freshly initialized pipeline (seeded by ``config.seed``).

        Pass ``codec`` to reuse an already-trained codec; otherwise a fresh
        one matching the config is created.
        """
        torch.manual_seed(config.seed)
        if codec is not None:
            _check_codec_compat(codec, config)
        elif config.codec_mode == "learned":
            codec = GlyphCodec(
                mode="learned",
                image_size=config.image_size,
                latent_channels=config.latent_channels,
                downsample=config.codec_downsample,
            )
        else:
            codec = GlyphCodec(mode="identity", image_size=config.image_size)
        model = GlyphDenoiser(
            latent_channels=codec.latent_channels,
            base_width=config.base_width,
            token_dim=config.style_dim,
        )
        schedule = make_schedule(config.timesteps, config.beta_min, config.beta_max)
        return cls(config, codec, model, schedule)

    # ------------------------------------------------------------------
    # tensor plumbing
    # ------------------------------------------------------------------

    @property
    def latent_shape(self) -> tuple:
        return self.codec.latent_shape

    def encode_images(self, images: Sequence) -> torch.Tensor:
        """Images -> normalized latents, shape (B, C, R, R)."""
        x = images_to_tensor(images, self.config.image_size)
        with torch.no_grad():
            z = self.codec.encode_tensor(x)
            return self.codec.normalize_latent(z)

    def decode_latents(self, z_norm: torch.Tensor) -> torch.Tensor:
        """Normalized latents -> pixel tensor (B, 1, H, W) in [0, 1]."""
        with torch.no_grad():
            return self.codec.decode_tensor(self.codec.denormalize_latent(z_norm))

    def refs_tensor(self, reference_sets: Sequence[Sequence]) -> torch.Tensor:
        """Stack per-item reference image lists into (B, N, 1, H, W)."""
        if not reference_sets:
            raise ValidationError("need at least one reference set")
        sizes = {len(refs) for refs in reference_sets}
        if len(sizes) != 1 or 0 in sizes:
            raise ValidationError(f"reference sets must share a nonzero length, got {sorted(sizes)}")
        stacks = [images_to_tensor(refs, self.config.image_size) for refs in reference_sets]
        return torch.stack(stacks, dim=0)

    def alpha_bar_tensor(self, t: torch.Tensor) -> torch.Tensor:
        """Cumulative signal-retention factors for integer timesteps ``t``."""
        values = self.schedule.alpha_bar[t.detach().cpu().numpy()]
        return torch.as_tensor(values, dtype=torch.float32).view(-1, 1, 1, 1)

    def add_noise(self, z0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
        """Jump the clean latent batch to per-sample timesteps in one shot."""
        if z0.shape != eps.shape:
            raise ValidationError(f"noise shape {tuple(eps.shape)} != latent {tuple(z0.shape)}")
        bar = self.alpha_bar_tensor(t)
        return torch.sqrt(bar) * z0 + torch.sqrt(1.0 - bar) * eps

    # ------------------------------------------------------------------
    # sampling
    # ------------------------------------------------------------------

    def sample_latents(
        self,
        z_x: torch.Tensor,
        tokens: torch.Tensor,
        gen: torch.Generator,
        deterministic: bool = False,
        stride: Optional[int] = None,
    ) -> torch.Tensor:
        """Run the reverse chain from pure noise down to a clean latent batch."""
        stride = self.config.stride if stride is None else int(stride)
        if stride < 1:
            raise ValidationError(f"stride must be >= 1, got {stride}")
        batch = z_x.shape[0]
        z = torch.randn(z_x.shape, generator=gen, dtype=z_x.dtype)
        steps = sampling_timesteps(self.schedule, stride)
        prevs = steps[1:] + [0]
        self.model.eval()
        with torch.no_grad():
            for t, t_prev in zip(steps, prevs):
                t_batch = torch.full((batch,), t, dtype=torch.long)
                pred = self.model.denoise(z, z_x, t_batch, tokens)
                coef_z0, coef_zt, var = posterior_coefficients(self.schedule, t, t_prev)
                z = coef_z0 * pred + coef_zt * z
                if var > 0.0 and not deterministic:
                    z = z + float(np.sqrt(var)) * torch.randn(z.shape, generator=gen, dtype=z.dtype)
        return z

    def decode_training_estimates(
        self,
        sources: Sequence,
        targets: Sequence,
        reference_sets: Sequence[Sequence],
        gen: torch.Generator,
        mode: str = "estimate",
        deterministic: bool = False,
    ) -> torch.Tensor:
        """Decoded pixel predictions for refiner training, gradient-free.

        ``estimate`` takes the one-shot clean-latent prediction at a random
        timestep; ``sample`` runs the full reverse chain.
        """
        if mode not in ("estimate", "sample"):
            raise ValidationError(f"unknown decode mode {mode!r}")
        if not (len(sources) == len(targets) == len(reference_sets)):
            raise ValidationError("sources, targets, and reference sets must align")
        with torch.no_grad():
            z_x = self.encode_images(sources)
            refs = self.refs_tensor(reference_sets)
            self.model.eval()
            tokens = self.model.style_tokens(refs)
            if mode == "estimate":
                z0 = self.encode_images(targets)
                t = torch.randint(1, self.schedule.timesteps + 1, (z0.shape[0],), generator=gen)
                eps = torch.randn(z0.shape, generator=gen, dtype=z0.dtype)
                z_t = self.add_noise(z0, t, eps)
                z0_hat = self.model.denoise(z_t, z_x, t, tokens)
            else:
                z0_hat = self.sample_latents(z_x, tokens, gen, deterministic=deterministic)
            return self.decode_latents(z0_hat)

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def clone(self) -> "DiffusionPipeline":
        """Deep-copy the denoiser; codec, schedule, and config are shared."""
        model = copy.deepcopy(self.model)
        return DiffusionPipeline(self.config, self.codec, model, self.schedule, self.groups)

    def save(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        save_codec(self.codec, os.path.join(out_dir, CODEC_FILE))
        header = {
            "kind": _BACKBONE_KIND,
            "version": _BACKBONE_VERSION,
            "config": self.config.to_dict(),
            "config_hash": self.config.compat_hash(),
            "groups": self.groups,
            "schedule": self.schedule.descriptor(),
        }
        save_checkpoint(
            os.path.join(out_dir, BACKBONE_FILE), header, state_dict_tensors(self.model)
        )

    @classmethod
    def load(cls, ckpt_dir: str) -> "DiffusionPipeline":
        backbone_path = os.path.join(ckpt_dir, BACKBONE_FILE)
        header, tensors = load_checkpoint(backbone_path)
        if header.get("kind") != _BACKBONE_KIND:
            raise StateError(f"{backbone_path}: not a backbone checkpoint")
        config = TrainConfig.from_dict(header["config"])
        if header.get("config_hash") != config.compat_hash():
            raise StateError(f"{backbone_path}: config hash mismatch; incompatible checkpoint")
        schedule = schedule_from_descriptor(header["schedule"])
        codec = load_codec(os.path.join(ckpt_dir, CODEC_FILE))
        _check_codec_compat(codec, config)
        if config.codec_mode == "learned":
            model = GlyphDenoiser(
                latent_channels=config.latent_channels,
                base_width=config.base_width,
                token_dim=config.style_dim,
            )
        else:
            model = GlyphDenoiser(
                latent_channels=1,
                base_width=config.base_width,
                token_dim=config.style_dim,
            )
        load_state_dict(model, tensors)
        pipeline = cls(config, codec, model, schedule, groups=header.get("groups"))
        fresh = partition_parameters(model)
        if fresh != pipeline.groups:
            raise StateError(f"{backbone_path}: stored parameter groups do not match the model")
        return pipeline


def _check_codec_compat(codec: GlyphCodec, config: TrainConfig) -> None:
    if codec.mode != config.codec_mode:
        raise StateError(f"codec mode {codec.mode!r} != config {config.codec_mode!r}")
    if codec.image_size != config.image_size:
        raise StateError(f"codec image size {codec.image_size} != config {config.image_size}")
    if codec.mode == "learned":
        if codec.latent_channels != config.latent_channels:
            raise StateError(
                f"codec latent channels {codec.latent_channels} != config {config.latent_channels}"
            )
        if codec.downsample != config.codec_downsample:
            raise StateError(
                f"codec downsample {codec.downsample} != config {config.codec_downsample}"
            )
