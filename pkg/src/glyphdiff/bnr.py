"""Background noise removal: a small refiner that cleans decoded glyphs.

The decoder output tends to carry speckle and soft halos.  The refiner sees a
binarized copy of the decoded glyph next to the clean content source and
predicts the final image.  Its loss mixes plain reconstruction, an edge-map
match, and a perceptual feature distance from the glyph classifier.
"""

from __future__ import annotations

import os
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from .ckptio import load_checkpoint, load_state_dict, save_checkpoint, state_dict_tensors
from .errors import NumericsError, StateError, ValidationError
from .metrics.classifier import GlyphClassifier, images_to_tensor

_CKPT_KIND = "glyph-bnr"

# Horizontal-gradient kernel; transpose gives the vertical one.
_SOBEL_X = torch.tensor(
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]], dtype=torch.float32
)

ArrayLike = Union[np.ndarray, torch.Tensor]


def binarize(image: ArrayLike, threshold: float = 0.5) -> ArrayLike:
    """Map values below the threshold to 0 (ink), everything else to 1.

    Ties land on the background side.  Works on numpy arrays and torch
    tensors alike, preserving the input's type and shape.
    """
    if not (0.0 < float(threshold) < 1.0):
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    image = getattr(image, "pixels", image)
    if isinstance(image, torch.Tensor):
        return (image >= threshold).to(image.dtype)
    arr = np.asarray(image)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return (arr >= threshold).astype(arr.dtype)


def sobel_tensor(x: torch.Tensor) -> torch.Tensor:
    """Edge magnitude of a (B, 1, H, W) batch with replicate padding.

    The magnitude is computed so that flat regions come out exactly 0.0 and
    the gradient of sqrt never sees a zero argument.
    """
    if x.ndim != 4 or x.shape[1] != 1:
        raise ValidationError(f"expected (B, 1, H, W), got {tuple(x.shape)}")
    if x.shape[-2] < 3 or x.shape[-1] < 3:
        raise ValidationError(f"images must be at least 3x3, got {tuple(x.shape[-2:])}")
    kx = _SOBEL_X.to(x.dtype).view(1, 1, 3, 3)
    ky = kx.transpose(-1, -2)
    padded = torch.nn.functional.pad(x, (1, 1, 1, 1), mode="replicate")
    gx = torch.nn.functional.conv2d(padded, kx)
    gy = torch.nn.functional.conv2d(padded, ky)
    sq = gx * gx + gy * gy
    return torch.where(sq > 0, torch.sqrt(torch.clamp_min(sq, 1e-30)), torch.zeros_like(sq))


def sobel(image: np.ndarray) -> np.ndarray:
    """Edge magnitude of a single 2-D image, computed in float64."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D image, got shape {arr.shape}")
    x = torch.from_numpy(arr).view(1, 1, *arr.shape)
    return sobel_tensor(x)[0, 0].numpy()


class _ConvBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, padding=1),
            nn.GroupNorm(min(8, c_out), c_out),
            nn.SiLU(),
            nn.Conv2d(c_out, c_out, 3, padding=1),
            nn.GroupNorm(min(8, c_out), c_out),
            nn.SiLU(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class BnrUNet(nn.Module):
    """Two-level U-Net over [binarized decode, content source] channel pairs."""

    def __init__(self, base_width: int = 32):
        super().__init__()
        if base_width < 8:
            raise ValidationError(f"base_width must be >= 8, got {base_width}")
        w = int(base_width)
        self.base_width = w
        self.enc1 = _ConvBlock(2, w)
        self.down = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.enc2 = _ConvBlock(2 * w, 2 * w)
        self.up = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(2 * w, w, 3, padding=1))
        self.dec1 = _ConvBlock(2 * w, w)
        self.out = nn.Conv2d(w, 1, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 2:
            raise ValidationError(f"refiner expects (B, 2, H, W), got {tuple(x.shape)}")
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise ValidationError(f"spatial dims must be even, got {tuple(x.shape[-2:])}")
        h1 = self.enc1(x)
        h2 = self.enc2(self.down(h1))
        h = self.dec1(torch.cat([self.up(h2), h1], dim=1))
        return torch.sigmoid(self.out(h))


def bnr_forward(
    decoded: torch.Tensor,
    source: torch.Tensor,
    model: BnrUNet,
    threshold: float = 0.5,
) -> torch.Tensor:
    """Refine decoded glyphs: binarize, pair with the source, run the net."""
    if decoded.shape != source.shape:
        raise ValidationError(
            f"decoded {tuple(decoded.shape)} and source {tuple(source.shape)} must match"
        )
    if decoded.ndim != 4 or decoded.shape[1] != 1:
        raise ValidationError(f"expected (B, 1, H, W), got {tuple(decoded.shape)}")
    hard = binarize(decoded, threshold)
    return model(torch.cat([hard, source], dim=1))


def bnr_loss_terms(
    pred: torch.Tensor, target: torch.Tensor, classifier: GlyphClassifier
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(reconstruction, edge, feature) loss terms, each a scalar tensor."""
    if pred.shape != target.shape:
        raise ValidationError(f"pred {tuple(pred.shape)} != target {tuple(target.shape)}")
    recon = (pred - target).abs().mean()
    edge = (sobel_tensor(pred) - sobel_tensor(target)).abs().mean()
    feat = ((classifier.features(pred) - classifier.features(target)) ** 2).mean()
    return recon, edge, feat


def bnr_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    classifier: GlyphClassifier,
    edge_weight: float = 1.0,
    feature_weight: float = 0.05,
) -> torch.Tensor:
    recon, edge, feat = bnr_loss_terms(pred, target, classifier)
    return recon + edge_weight * edge + feature_weight * feat


def fit_bnr(
    model: BnrUNet,
    decoded: torch.Tensor,
    sources: torch.Tensor,
    targets: torch.Tensor,
    classifier: GlyphClassifier,
    epochs: int = 20,
    lr: float = 1e-3,
    batch_size: int = 16,
    seed: int = 0,
    threshold: float = 0.5,
    edge_weight: float = 1.0,
    feature_weight: float = 0.05,
) -> List[float]:
    """Train the refiner on fixed (decoded, source, target) tensor triples.

    Returns the mean loss per epoch.  The classifier is frozen in place.
    """
    if not (decoded.shape == sources.shape == targets.shape):
        raise ValidationError("decoded, sources, and targets must share one shape")
    if decoded.ndim != 4 or decoded.shape[1] != 1:
        raise ValidationError(f"expected (N, 1, H, W) stacks, got {tuple(decoded.shape)}")
    if epochs < 1 or batch_size < 1:
        raise ValidationError("epochs and batch_size must be positive")
    classifier.eval()
    for p in classifier.parameters():
        p.requires_grad_(False)
    hard = binarize(decoded, threshold)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    n = decoded.shape[0]
    history: List[float] = []
    model.train()
    for _ in range(epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for lo in range(0, n, batch_size):
            idx = torch.from_numpy(order[lo : lo + batch_size].copy())
            pred = model(torch.cat([hard[idx], sources[idx]], dim=1))
            loss = bnr_loss(pred, targets[idx], classifier, edge_weight, feature_weight)
            if not torch.isfinite(loss):
                raise NumericsError(f"refiner loss is not finite: {loss.item()}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        history.append(total / count)
    model.eval()
    return history


def train_bnr(
    pipeline,
    corpus,
    classifier: GlyphClassifier,
    epochs: int = 20,
    lr: float = 1e-3,
    batch_size: int = 16,
    seed: int = 0,
    decode_mode: str = "estimate",
    threshold: float = 0.5,
    base_width: int = 32,
    edge_weight: float = 1.0,
    feature_weight: float = 0.05,
    n_refs: Optional[int] = None,
) -> Tuple[BnrUNet, List[float]]:
    """Train a refiner against a frozen generation pipeline.

    Training inputs are decoded predictions from the pipeline over the seen
    chars x seen styles grid; ``decode_mode`` picks between one-shot latent
    estimates and full reverse-chain samples.
    """
    manifest = corpus.manifest
    n_refs = pipeline.config.n_refs if n_refs is None else int(n_refs)
    seen_chars = list(manifest.seen_chars)
    if len(seen_chars) < n_refs + 1:
        raise ValidationError(
            f"need at least {n_refs + 1} seen chars to sample references, got {len(seen_chars)}"
        )
    pairs = [(sid, cid) for sid in manifest.seen_styles for cid in seen_chars]
    torch.manual_seed(seed)
    model = BnrUNet(base_width)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    classifier.eval()
    for p in classifier.parameters():
        p.requires_grad_(False)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    canonical = manifest.canonical_style_id
    history: List[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        total, count = 0.0, 0
        for lo in range(0, len(pairs), batch_size):
            chunk = [pairs[i] for i in order[lo : lo + batch_size]]
            sources, targets, ref_sets = [], [], []
            for sid, cid in chunk:
                sources.append(corpus.image(canonical, cid))
                targets.append(corpus.image(sid, cid))
                pool = [c for c in seen_chars if c != cid]
                picks = rng.choice(len(pool), size=n_refs, replace=False)
                ref_sets.append([corpus.image(sid, pool[i]) for i in picks])
            decoded = pipeline.decode_training_estimates(
                sources, targets, ref_sets, gen, mode=decode_mode
            )
            src = images_to_tensor(sources)
            tgt = images_to_tensor(targets)
            model.train()
            pred = bnr_forward(decoded, src, model, threshold)
            loss = bnr_loss(pred, tgt, classifier, edge_weight, feature_weight)
            if not torch.isfinite(loss):
                raise NumericsError(f"refiner loss is not finite: {loss.item()}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(chunk)
            count += len(chunk)
        history.append(total / count)
    model.eval()
    return model, history


def save_bnr(
    model: BnrUNet, path: str, compat_hash: str, threshold: float = 0.5
) -> None:
    header = {
        "kind": _CKPT_KIND,
        "version": 1,
        "base_width": model.base_width,
        "threshold": float(threshold),
        "compat_hash": compat_hash,
    }
    save_checkpoint(path, header, state_dict_tensors(model))


def load_bnr(path: str, compat_hash: Optional[str] = None) -> Tuple[BnrUNet, float]:
    """Load a refiner; verifies the base-pipeline hash when one is given."""
    header, tensors = load_checkpoint(path)
    if header.get("kind") != _CKPT_KIND:
        raise StateError(f"{path}: not a refiner checkpoint")
    if compat_hash is not None and header.get("compat_hash") != compat_hash:
        raise StateError(f"{path}: refiner was trained against a different base pipeline")
    model = BnrUNet(header["base_width"])
    load_state_dict(model, tensors)
    model.eval()
    return model, float(header["threshold"])
