"""Latent codec: a small conv VAE, or an identity passthrough for pixel-space runs.

The learned codec compresses (1, H, W) glyphs to (latent_channels, H/f, H/f)
with two stride-2 stages (f = 4 default). Encoding for the diffusion chain
returns the posterior mean; sampling happens only inside training. After
training, a scalar (center, scale) pair is fitted so normalized latents are
zero-centered with unit-ish spread; identity mode fixes them to map [0, 1]
pixels onto [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .ckptio import load_checkpoint, load_state_dict, save_checkpoint, state_dict_tensors
from .errors import ConfigurationError, NumericsError, StateError, ValidationError

_CKPT_KIND = "glyph-codec"
_KL_WEIGHT = 1e-6
_LOGVAR_CLAMP = 10.0

CODEC_MODES = ("learned", "identity")


@dataclass(frozen=True, eq=False)
class Latent:
    """Array plus the space it lives in ('latent' or 'pixel')."""

    values: np.ndarray
    space: str

    def __post_init__(self) -> None:
        if self.space not in ("latent", "pixel"):
            raise ValidationError(f"space must be 'latent' or 'pixel', got {self.space!r}")


class GlyphCodec(nn.Module):
    def __init__(
        self,
        mode: str = "learned",
        image_size: int = 64,
        latent_channels: int = 4,
        downsample: int = 4,
        width: int = 32,
    ):
        super().__init__()
        if mode not in CODEC_MODES:
            raise ConfigurationError(f"mode must be one of {CODEC_MODES}, got {mode!r}")
        self.mode = mode
        self.image_size = int(image_size)
        self.width = int(width)

        if mode == "identity":
            # Identity taps pixels straight through as a 1-channel latent.
            self.latent_channels = 1
            self.downsample = 1
            self.register_buffer("latent_center", torch.tensor(0.5))
            self.register_buffer("latent_scale", torch.tensor(2.0))
            return

        if downsample < 2 or downsample & (downsample - 1) != 0:
            raise ConfigurationError(f"downsample must be a power of two >= 2, got {downsample}")
        if image_size % downsample != 0 or image_size // downsample < 8:
            raise ConfigurationError(
                f"image_size {image_size} with downsample {downsample} leaves too small a latent"
            )
        self.latent_channels = int(latent_channels)
        self.downsample = int(downsample)
        stages = int(np.log2(downsample))

        w = self.width
        enc = []
        c_in = 1
        for i in range(stages):
            c_out = w * (2**i)
            enc += [
                nn.Conv2d(c_in, c_out, 3, stride=2, padding=1),
                nn.GroupNorm(min(8, c_out), c_out),
                nn.SiLU(),
            ]
            c_in = c_out
        enc.append(nn.Conv2d(c_in, 2 * self.latent_channels, 3, padding=1))
        self.encoder = nn.Sequential(*enc)

        dec = [nn.Conv2d(self.latent_channels, c_in, 3, padding=1), nn.SiLU()]
        for i in reversed(range(stages)):
            c_out = w * (2 ** max(i - 1, 0)) if i > 0 else w
            dec += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(c_in, c_out, 3, padding=1),
                nn.GroupNorm(min(8, c_out), c_out),
                nn.SiLU(),
            ]
            c_in = c_out
        dec.append(nn.Conv2d(c_in, 1, 3, padding=1))
        self.decoder = nn.Sequential(*dec)
        self.register_buffer("latent_center", torch.tensor(0.0))
        self.register_buffer("latent_scale", torch.tensor(1.0))

    @property
    def latent_size(self) -> int:
        return self.image_size // self.downsample

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return (self.latent_channels, self.latent_size, self.latent_size)

    def _check_pixels(self, x: torch.Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValidationError(f"expected (B, 1, H, W) pixels, got {tuple(x.shape)}")
        if x.shape[-1] != self.image_size or x.shape[-2] != self.image_size:
            raise ValidationError(
                f"codec expects {self.image_size}x{self.image_size} images, got {tuple(x.shape[-2:])}"
            )

    def encode_dist(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Posterior (mean, logvar); learned mode only."""
        if self.mode != "learned":
            raise StateError("encode_dist is only defined for the learned codec")
        self._check_pixels(x)
        h = self.encoder(x)
        mu, logvar = torch.chunk(h, 2, dim=1)
        return mu, logvar.clamp(-_LOGVAR_CLAMP, _LOGVAR_CLAMP)

    def encode_tensor(self, x: torch.Tensor) -> torch.Tensor:
        """Deterministic encoding (posterior mean / identity passthrough)."""
        if self.mode == "identity":
            self._check_pixels(x)
            return x
        return self.encode_dist(x)[0]

    def decode_tensor(self, z: torch.Tensor) -> torch.Tensor:
        """Latents back to pixels, clamped to [0, 1]."""
        if z.ndim != 4 or z.shape[1] != self.latent_channels:
            raise ValidationError(
                f"expected (B, {self.latent_channels}, {self.latent_size}, {self.latent_size}) "
                f"latents, got {tuple(z.shape)}"
            )
        if self.mode == "identity":
            return z.clamp(0.0, 1.0)
        return torch.sigmoid(self.decoder(z)).clamp(0.0, 1.0)

    @torch.no_grad()
    def encode(self, image) -> Latent:
        """Single image (H, W) array or GlyphImage -> tagged latent."""
        arr = np.asarray(getattr(image, "pixels", image), dtype=np.float32)
        if arr.ndim != 2:
            raise ValidationError(f"expected a 2-D image, got shape {arr.shape}")
        x = torch.from_numpy(arr)[None, None]
        z = self.encode_tensor(x)[0]
        return Latent(values=z.numpy(), space="latent")

    @torch.no_grad()
    def decode(self, latent) -> np.ndarray:
        """Tagged latent (or raw array) -> (H, W) pixel image in [0, 1]."""
        values = latent.values if isinstance(latent, Latent) else np.asarray(latent)
        z = torch.from_numpy(np.asarray(values, dtype=np.float32))[None]
        return self.decode_tensor(z)[0, 0].numpy()

    def normalize_latent(self, z: torch.Tensor) -> torch.Tensor:
        """Map raw latents into the zero-centered space the diffusion chain uses."""
        return (z - self.latent_center) * self.latent_scale

    def denormalize_latent(self, z: torch.Tensor) -> torch.Tensor:
        return z / self.latent_scale + self.latent_center

    def fit_latent_stats(self, images: torch.Tensor) -> None:
        """Set (center, scale) from the latent mean and 1/std over ``images``."""
        if self.mode == "identity":
            return
        with torch.no_grad():
            z = self.encode_tensor(images)
            std = float(z.std())
            if not np.isfinite(std) or std <= 0.0:
                raise NumericsError(f"latent std {std} is unusable for normalization")
            self.latent_center.fill_(float(z.mean()))
            self.latent_scale.fill_(1.0 / std)


def train_codec(
    images: Sequence,
    mode: str = "learned",
    image_size: int = 64,
    latent_channels: int = 4,
    downsample: int = 4,
    width: int = 32,
    epochs: int = 50,
    lr: float = 1e-3,
    batch_size: int = 32,
    seed: int = 0,
) -> tuple[GlyphCodec, list[float]]:
    """Train the VAE on corpus images; identity mode returns immediately.

    Loss is pixel L1 plus a lightly weighted KL pull toward the unit prior.
    Returns the codec (with latent stats fitted) and the per-epoch loss curve.
    """
    torch.manual_seed(seed)
    codec = GlyphCodec(
        mode=mode,
        image_size=image_size,
        latent_channels=latent_channels,
        downsample=downsample,
        width=width,
    )
    if mode == "identity":
        return codec, []

    if len(images) == 0:
        raise ValidationError("cannot train the codec on zero images")
    stack = [np.asarray(getattr(img, "pixels", img), dtype=np.float32) for img in images]
    x_all = torch.from_numpy(np.stack(stack)).unsqueeze(1)
    codec._check_pixels(x_all)

    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(codec.parameters(), lr=lr)
    losses: list[float] = []
    n = x_all.shape[0]
    codec.train()
    for _ in range(max(1, epochs)):
        order = torch.randperm(n, generator=gen)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            x = x_all[order[start : start + batch_size]]
            mu, logvar = codec.encode_dist(x)
            z = mu + torch.exp(0.5 * logvar) * torch.randn(mu.shape, generator=gen)
            recon = torch.sigmoid(codec.decoder(z))
            rec_loss = (recon - x).abs().mean()
            kl = -0.5 * torch.mean(1 + logvar - mu.pow(2) - logvar.exp())
            loss = rec_loss + _KL_WEIGHT * kl
            if not torch.isfinite(loss):
                raise NumericsError(f"codec loss became non-finite: {float(loss)}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach()) * x.shape[0]
        losses.append(epoch_loss / n)
    codec.eval()
    codec.fit_latent_stats(x_all)
    return codec, losses


def save_codec(codec: GlyphCodec, path: str | Path) -> None:
    header = {
        "kind": _CKPT_KIND,
        "version": 1,
        "mode": codec.mode,
        "image_size": codec.image_size,
        "latent_channels": codec.latent_channels,
        "downsample": codec.downsample,
        "width": codec.width,
    }
    save_checkpoint(path, header, state_dict_tensors(codec))


def load_codec(path: str | Path) -> GlyphCodec:
    header, tensors = load_checkpoint(path)
    if header.get("kind") != _CKPT_KIND:
        raise StateError(f"{path} is not a codec checkpoint (kind={header.get('kind')!r})")
    kwargs = {}
    if header["mode"] == "learned":
        kwargs = {"latent_channels": header["latent_channels"], "downsample": header["downsample"]}
    codec = GlyphCodec(
        mode=header["mode"],
        image_size=header["image_size"],
        width=header["width"],
        **kwargs,
    )
    load_state_dict(codec, tensors)
    codec.eval()
    return codec
