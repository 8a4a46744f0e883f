"""Cross-attention: forward kernel, closed-form gradients, and network blocks.

The functional form works on single instances with explicit weight matrices
(rows are tokens): queries come from the content stream h, keys and values
from the style tokens s. The closed-form backward pass exists so style- vs
content-path gradient flow can be audited independently of autodiff; tests
hold the two routes against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from ..errors import ConfigurationError, ValidationError


def scaled_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """softmax(q k^T / sqrt(d)) v over the last two dims; leading dims broadcast."""
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = q @ k.transpose(-2, -1) * scale
    return scores.softmax(dim=-1) @ v


@dataclass(frozen=True)
class CrossAttnWeights:
    """Projection matrices: wq maps the content stream, wk/wv map style tokens."""

    wq: torch.Tensor  # (d_h, d_h)
    wk: torch.Tensor  # (d_h, d)
    wv: torch.Tensor  # (d_h, d)

    def __post_init__(self) -> None:
        if self.wq.ndim != 2 or self.wq.shape[0] != self.wq.shape[1]:
            raise ValidationError(f"wq must be square, got {tuple(self.wq.shape)}")
        d_h = self.wq.shape[0]
        for name, w in (("wk", self.wk), ("wv", self.wv)):
            if w.ndim != 2 or w.shape[0] != d_h:
                raise ValidationError(
                    f"{name} must have shape ({d_h}, token_dim), got {tuple(w.shape)}"
                )
        if self.wk.shape != self.wv.shape:
            raise ValidationError(
                f"wk and wv shapes differ: {tuple(self.wk.shape)} vs {tuple(self.wv.shape)}"
            )


def _check_inputs(h: torch.Tensor, s: torch.Tensor, weights: CrossAttnWeights) -> None:
    if h.ndim != 2 or s.ndim != 2:
        raise ValidationError(f"h and s must be 2-D token matrices, got {h.ndim}-D and {s.ndim}-D")
    if h.shape[1] != weights.wq.shape[1]:
        raise ValidationError(f"h width {h.shape[1]} does not match wq width {weights.wq.shape[1]}")
    if s.shape[1] != weights.wk.shape[1]:
        raise ValidationError(f"s width {s.shape[1]} does not match wk width {weights.wk.shape[1]}")
    if s.shape[0] < 1:
        raise ValidationError("need at least one style token")


def cross_attention_intermediates(
    h: torch.Tensor, s: torch.Tensor, weights: CrossAttnWeights
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """(q, k, v, scores, attn, out) for one instance; rows are tokens."""
    _check_inputs(h, s, weights)
    q = h @ weights.wq.T
    k = s @ weights.wk.T
    v = s @ weights.wv.T
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = q @ k.T * scale
    attn = scores.softmax(dim=-1)
    return q, k, v, scores, attn, attn @ v


def cross_attention(h: torch.Tensor, s: torch.Tensor, weights: CrossAttnWeights) -> torch.Tensor:
    """Attention output (M, d_h) for content tokens h against style tokens s."""
    return cross_attention_intermediates(h, s, weights)[-1]


def cross_attention_grads(
    h: torch.Tensor,
    s: torch.Tensor,
    weights: CrossAttnWeights,
    grad_out: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Closed-form input gradients (dL/dh, dL/ds) given dL/dout.

    The softmax Jacobian diag(a) - a a^T is applied row-wise in its reduced
    form a * (g - <a, g>). With a single style token the softmax row is the
    constant 1, its Jacobian vanishes, and dL/ds flows through the value
    path alone.
    """
    q, k, v, _, attn, _ = cross_attention_intermediates(h, s, weights)
    if grad_out.shape != (h.shape[0], weights.wq.shape[0]):
        raise ValidationError(
            f"grad_out shape {tuple(grad_out.shape)} must be {(h.shape[0], weights.wq.shape[0])}"
        )

    d_attn = grad_out @ v.T
    inner = (attn * d_attn).sum(dim=-1, keepdim=True)
    d_scores = attn * (d_attn - inner)

    scale = 1.0 / math.sqrt(q.shape[-1])
    d_q = d_scores @ k * scale
    d_k = d_scores.T @ q * scale
    d_v = attn.T @ grad_out

    grad_h = d_q @ weights.wq
    grad_s = d_k @ weights.wk + d_v @ weights.wv
    return grad_h, grad_s


class CrossAttention(nn.Module):
    """Multi-head cross-attention from a flattened feature map onto style tokens."""

    def __init__(self, channels: int, token_dim: int, heads: int = 4):
        super().__init__()
        if channels % heads != 0:
            raise ConfigurationError(f"channels {channels} not divisible by heads {heads}")
        self.heads = heads
        self.to_q = nn.Linear(channels, channels, bias=False)
        self.to_k = nn.Linear(token_dim, channels, bias=False)
        self.to_v = nn.Linear(token_dim, channels, bias=False)
        self.to_out = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        b, m, c = x.shape
        n = tokens.shape[1]
        dh = c // self.heads

        def split(t: torch.Tensor, length: int) -> torch.Tensor:
            return t.reshape(b, length, self.heads, dh).transpose(1, 2)

        q = split(self.to_q(x), m)
        k = split(self.to_k(tokens), n)
        v = split(self.to_v(tokens), n)
        out = scaled_attention(q, k, v)
        return self.to_out(out.transpose(1, 2).reshape(b, m, c))


class TransformerBlock(nn.Module):
    """Pre-norm cross-attention plus feed-forward, both residual."""

    def __init__(self, channels: int, token_dim: int, heads: int = 4, ff_mult: int = 2):
        super().__init__()
        self.norm_attn = nn.LayerNorm(channels)
        self.attn = CrossAttention(channels, token_dim, heads)
        self.norm_ff = nn.LayerNorm(channels)
        self.ff = nn.Sequential(
            nn.Linear(channels, ff_mult * channels),
            nn.SiLU(),
            nn.Linear(ff_mult * channels, channels),
        )

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm_attn(x), tokens)
        return x + self.ff(self.norm_ff(x))


class SpatialTransformer(nn.Module):
    """Wraps a TransformerBlock so it can sit inside a conv feature pyramid."""

    def __init__(self, channels: int, token_dim: int, heads: int = 4, ff_mult: int = 2):
        super().__init__()
        self.norm = nn.GroupNorm(min(8, channels), channels)
        self.proj_in = nn.Conv2d(channels, channels, 1)
        self.block = TransformerBlock(channels, token_dim, heads, ff_mult)
        self.proj_out = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        b, c, height, width = x.shape
        h = self.proj_in(self.norm(x))
        seq = h.flatten(2).transpose(1, 2)
        seq = self.block(seq, tokens)
        h = seq.transpose(1, 2).reshape(b, c, height, width)
        return x + self.proj_out(h)
