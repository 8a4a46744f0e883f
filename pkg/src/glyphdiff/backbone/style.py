"""Per-reference style encoder.

Each reference image is encoded independently (conv trunk + global average
pool) and projected to one token; a set of N references therefore yields N
tokens whose order carries no information. Only the final projection is
style-specific capacity by design; the trunk counts as shared plumbing.
"""

from __future__ import annotations

import torch
from torch import nn

from ..errors import ValidationError


class StyleEncoder(nn.Module):
    def __init__(self, token_dim: int = 128, width: int = 32):
        super().__init__()
        w = width
        channels = [1, w, w, 2 * w, 2 * w]
        blocks = []
        for c_in, c_out in zip(channels, channels[1:]):
            blocks += [
                nn.Conv2d(c_in, c_out, 3, stride=2, padding=1),
                nn.GroupNorm(min(8, c_out), c_out),
                nn.SiLU(),
            ]
        self.trunk = nn.Sequential(*blocks)
        self.proj = nn.Linear(2 * w, token_dim)

    def trunk_features(self, images: torch.Tensor) -> torch.Tensor:
        """Pooled trunk activations for (B, 1, H, W) images -> (B, 2 * width)."""
        if images.ndim != 4 or images.shape[1] != 1:
            raise ValidationError(f"expected (B, 1, H, W) images, got {tuple(images.shape)}")
        return self.trunk(images).mean(dim=(2, 3))

    def forward(self, refs: torch.Tensor) -> torch.Tensor:
        """Encode (B, N, 1, H, W) reference stacks into (B, N, token_dim) tokens."""
        if refs.ndim != 5 or refs.shape[2] != 1:
            raise ValidationError(f"expected (B, N, 1, H, W) references, got {tuple(refs.shape)}")
        b, n = refs.shape[:2]
        flat = refs.reshape(b * n, 1, *refs.shape[3:])
        tokens = self.proj(self.trunk_features(flat))
        return tokens.reshape(b, n, -1)
