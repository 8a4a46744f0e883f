"""Glyph character recognizer.

A small conv net trained on the corpus's renders. Besides OCR accuracy it
supplies the shared feature space: its pooled penultimate activations feed
both the Frechet distance and the pixel refiner's perceptual loss term.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from ..ckptio import load_checkpoint, load_state_dict, save_checkpoint, state_dict_tensors
from ..errors import NumericsError, StateError, ValidationError

_CKPT_KIND = "glyph-classifier"


def images_to_tensor(images: Sequence, expected_size: int | None = None) -> torch.Tensor:
    """Stack [0, 1] grayscale images into a (B, 1, H, W) float tensor."""
    arrays = []
    for img in images:
        arr = np.asarray(getattr(img, "pixels", img), dtype=np.float32)
        if arr.ndim != 2:
            raise ValidationError(f"expected 2-D images, got shape {arr.shape}")
        arrays.append(arr)
    if not arrays:
        raise ValidationError("empty image list")
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise ValidationError(f"images must share one shape, got {sorted(shapes)}")
    if expected_size is not None:
        shape = arrays[0].shape
        if shape != (expected_size, expected_size):
            raise ValidationError(f"expected {expected_size}x{expected_size} images, got {shape}")
    return torch.from_numpy(np.stack(arrays)).unsqueeze(1)


class GlyphClassifier(nn.Module):
    """Four stride-2 conv blocks, global average pool, linear head."""

    def __init__(self, char_ids: Sequence[int], image_size: int, width: int = 16):
        super().__init__()
        self.char_ids = sorted(int(c) for c in char_ids)
        if len(set(self.char_ids)) != len(self.char_ids):
            raise ValidationError("char_ids must be distinct")
        self.image_size = int(image_size)
        self.width = int(width)
        self._index_of = {cid: i for i, cid in enumerate(self.char_ids)}

        w = self.width
        channels = [1, w, 2 * w, 4 * w, 4 * w]
        blocks = []
        for c_in, c_out in zip(channels, channels[1:]):
            blocks += [
                nn.Conv2d(c_in, c_out, 3, stride=2, padding=1),
                nn.GroupNorm(min(8, c_out), c_out),
                nn.SiLU(),
            ]
        self.trunk = nn.Sequential(*blocks)
        self.head = nn.Linear(4 * w, len(self.char_ids))

    @property
    def feature_dim(self) -> int:
        return 4 * self.width

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Pooled penultimate activations, shape (B, feature_dim)."""
        if x.shape[-1] != self.image_size or x.shape[-2] != self.image_size:
            raise ValidationError(
                f"classifier expects {self.image_size}x{self.image_size} inputs, got {tuple(x.shape[-2:])}"
            )
        h = self.trunk(x)
        return h.mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))

    def class_index(self, char_id: int) -> int:
        if char_id not in self._index_of:
            raise ValidationError(f"char_id {char_id} unknown to this classifier")
        return self._index_of[char_id]


def train_classifier(
    corpus,
    epochs: int = 40,
    seed: int = 0,
    width: int = 16,
    lr: float = 1e-3,
    batch_size: int = 32,
) -> GlyphClassifier:
    """Train the recognizer on every character rendered in the source and seen styles.

    Light augmentation (sub-pixel shifts via roll, additive noise) keeps the
    features usable on imperfect generated images.
    """
    manifest = corpus.manifest
    torch.manual_seed(seed)
    model = GlyphClassifier(manifest.char_ids, manifest.size, width=width)

    style_ids = [manifest.canonical_style_id] + list(manifest.seen_styles)
    images, labels = [], []
    for sid in style_ids:
        for cid in manifest.char_ids:
            images.append(corpus.image(sid, cid))
            labels.append(model.class_index(cid))
    x_all = images_to_tensor(images)
    y_all = torch.tensor(labels, dtype=torch.long)

    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    model.train()
    n = x_all.shape[0]
    for _ in range(max(1, epochs)):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            x = x_all[idx].clone()
            # Shift up to +/-2 px and add mild noise.
            shifts = torch.randint(-2, 3, (2,), generator=gen)
            x = torch.roll(x, shifts=(int(shifts[0]), int(shifts[1])), dims=(2, 3))
            x = (x + 0.05 * torch.randn(x.shape, generator=gen)).clamp(0.0, 1.0)
            opt.zero_grad()
            loss = loss_fn(model(x), y_all[idx])
            if not torch.isfinite(loss):
                raise NumericsError("classifier training produced a non-finite loss")
            loss.backward()
            opt.step()
    model.eval()
    return model


@torch.no_grad()
def ocr_accuracy(generated: Sequence, target_char_ids: Sequence[int], classifier: GlyphClassifier) -> float:
    """Fraction of generated glyphs whose top-1 prediction matches the target."""
    targets = [int(c) for c in target_char_ids]
    if len(targets) == 0:
        raise ValidationError("need at least one generated glyph")
    if len(generated) != len(targets):
        raise ValidationError(
            f"got {len(generated)} images but {len(targets)} target char_ids"
        )
    wanted = torch.tensor([classifier.class_index(c) for c in targets], dtype=torch.long)
    classifier.eval()
    logits = classifier(images_to_tensor(generated))
    predicted = logits.argmax(dim=1)
    return float((predicted == wanted).to(torch.float64).mean())


@torch.no_grad()
def classifier_features(classifier: GlyphClassifier, images: Sequence) -> np.ndarray:
    """Feature matrix (n_images, feature_dim) in float64."""
    classifier.eval()
    feats = classifier.features(images_to_tensor(images))
    return feats.to(torch.float64).numpy()


def classifier_param_hash(classifier: GlyphClassifier) -> str:
    """Short digest over the classifier's weights, for report provenance."""
    digest = hashlib.sha256()
    for name, tensor in sorted(classifier.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()[:16]


def save_classifier(classifier: GlyphClassifier, path: str | Path) -> None:
    header = {
        "kind": _CKPT_KIND,
        "version": 1,
        "char_ids": classifier.char_ids,
        "image_size": classifier.image_size,
        "width": classifier.width,
    }
    save_checkpoint(path, header, state_dict_tensors(classifier))


def load_classifier(path: str | Path) -> GlyphClassifier:
    header, tensors = load_checkpoint(path)
    if header.get("kind") != _CKPT_KIND:
        raise StateError(f"{path} is not a classifier checkpoint (kind={header.get('kind')!r})")
    model = GlyphClassifier(header["char_ids"], header["image_size"], width=header["width"])
    load_state_dict(model, tensors)
    model.eval()
    return model
