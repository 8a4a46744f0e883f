"""Conditional U-Net predicting the clean latent from a noisy one.

Three resolution levels with channel widths (w, 2w, 4w), two residual blocks
per level, and style cross-attention at the two lowest resolutions plus the
bottleneck. Content conditioning arrives pre-concatenated on the channel
axis; the timestep enters each residual block through a sinusoidal embedding.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from ..errors import ConfigurationError
from .attention import SpatialTransformer


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal features of integer timesteps, shape (B, dim)."""
    if dim % 2 != 0:
        raise ConfigurationError(f"embedding dim must be even, got {dim}")
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float32) / half)
    args = t.to(torch.float32)[:, None] * freqs[None, :]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class ResBlock(nn.Module):
    """GroupNorm conv block with an additive per-channel timestep shift."""

    def __init__(self, c_in: int, c_out: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(min(8, c_in), c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, c_out)
        self.norm2 = nn.GroupNorm(min(8, c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.time_proj(torch.nn.functional.silu(t_emb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class DenoiserUNet(nn.Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        base_width: int = 64,
        token_dim: int = 128,
        heads: int = 4,
        ff_mult: int = 2,
    ):
        super().__init__()
        if base_width % 8 != 0:
            raise ConfigurationError(f"base_width must be a multiple of 8, got {base_width}")
        w = base_width
        widths = (w, 2 * w, 4 * w)
        time_dim = 4 * w
        self.base_width = w
        self.time_mlp = nn.Sequential(nn.Linear(w, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim))

        self.stem = nn.Conv2d(in_channels, w, 3, padding=1)

        # Encoder: levels 0..2; style attention on the two lowest resolutions.
        self.enc_res = nn.ModuleList()
        self.enc_attn = nn.ModuleList()
        self.downs = nn.ModuleList()
        for level, width in enumerate(widths):
            self.enc_res.append(
                nn.ModuleList([ResBlock(width, width, time_dim), ResBlock(width, width, time_dim)])
            )
            self.enc_attn.append(
                SpatialTransformer(width, token_dim, heads, ff_mult) if level >= 1 else None
            )
            if level < len(widths) - 1:
                self.downs.append(nn.Conv2d(width, widths[level + 1], 3, stride=2, padding=1))

        self.mid_res1 = ResBlock(widths[-1], widths[-1], time_dim)
        self.mid_attn = SpatialTransformer(widths[-1], token_dim, heads, ff_mult)
        self.mid_res2 = ResBlock(widths[-1], widths[-1], time_dim)

        # Decoder mirrors the encoder, consuming one skip per residual block.
        self.dec_res = nn.ModuleList()
        self.dec_attn = nn.ModuleList()
        self.ups = nn.ModuleList()
        for level in reversed(range(len(widths))):
            width = widths[level]
            self.dec_res.append(
                nn.ModuleList(
                    [ResBlock(2 * width, width, time_dim), ResBlock(2 * width, width, time_dim)]
                )
            )
            self.dec_attn.append(
                SpatialTransformer(width, token_dim, heads, ff_mult) if level >= 1 else None
            )
            if level > 0:
                self.ups.append(
                    nn.Sequential(
                        nn.Upsample(scale_factor=2, mode="nearest"),
                        nn.Conv2d(width, widths[level - 1], 3, padding=1),
                    )
                )

        self.out_norm = nn.GroupNorm(min(8, w), w)
        self.out_conv = nn.Conv2d(w, out_channels, 3, padding=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        t_emb = self.time_mlp(timestep_embedding(t, self.base_width))

        h = self.stem(x)
        skips: list[torch.Tensor] = []
        for level, blocks in enumerate(self.enc_res):
            for block in blocks:
                h = block(h, t_emb)
                skips.append(h)
            attn = self.enc_attn[level]
            if attn is not None:
                h = attn(h, tokens)
            if level < len(self.downs):
                h = self.downs[level](h)

        h = self.mid_res1(h, t_emb)
        h = self.mid_attn(h, tokens)
        h = self.mid_res2(h, t_emb)

        for i, blocks in enumerate(self.dec_res):
            level = len(self.enc_res) - 1 - i
            for block in blocks:
                h = block(torch.cat([h, skips.pop()], dim=1), t_emb)
            attn = self.dec_attn[i]
            if attn is not None:
                h = attn(h, tokens)
            if level > 0:
                h = self.ups[i](h)

        return self.out_conv(torch.nn.functional.silu(self.out_norm(h)))
