"""The denoising model: U-Net plus style encoder under one module.

Conditioning is strictly dual-pathway: the source latent enters only by
channel concatenation with the noisy latent at the input layer (content),
and reference tokens enter only through cross-attention (style).
"""

from __future__ import annotations

import torch
from torch import nn

from ..errors import ValidationError
from .style import StyleEncoder
from .unet import DenoiserUNet


class GlyphDenoiser(nn.Module):
    def __init__(
        self,
        latent_channels: int,
        base_width: int = 64,
        token_dim: int = 128,
        heads: int = 4,
        style_width: int | None = None,
    ):
        super().__init__()
        self.latent_channels = int(latent_channels)
        self.unet = DenoiserUNet(
            in_channels=2 * latent_channels,
            out_channels=latent_channels,
            base_width=base_width,
            token_dim=token_dim,
            heads=heads,
        )
        self.style_encoder = StyleEncoder(
            token_dim=token_dim, width=style_width or max(8, base_width // 2)
        )

    def style_tokens(self, refs: torch.Tensor) -> torch.Tensor:
        """(B, N, 1, H, W) reference images -> (B, N, token_dim) tokens."""
        return self.style_encoder(refs)

    def denoise(
        self, z_t: torch.Tensor, z_x: torch.Tensor, t: torch.Tensor, tokens: torch.Tensor
    ) -> torch.Tensor:
        """Predict the clean latent from (noisy latent, source latent, t, tokens)."""
        if z_t.shape != z_x.shape:
            raise ValidationError(f"z_t shape {tuple(z_t.shape)} != z_x shape {tuple(z_x.shape)}")
        if z_t.shape[1] != self.latent_channels:
            raise ValidationError(
                f"expected {self.latent_channels} latent channels, got {z_t.shape[1]}"
            )
        return self.unet(torch.cat([z_t, z_x], dim=1), t, tokens)

    def forward(
        self, z_t: torch.Tensor, z_x: torch.Tensor, t: torch.Tensor, refs: torch.Tensor
    ) -> torch.Tensor:
        return self.denoise(z_t, z_x, t, self.style_tokens(refs))
