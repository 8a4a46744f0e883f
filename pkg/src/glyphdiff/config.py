"""Run configuration: a single flat record shared by the CLI and the library.

Config files are JSON objects mirroring :class:`TrainConfig` field-for-field.
Unknown keys are rejected rather than ignored so a typo cannot silently fall
back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError

VALID_IMAGE_SIZES = (32, 64, 128)
VALID_CODEC_MODES = ("learned", "identity")
VALID_BNR_DECODE_MODES = ("estimate", "sample")

# Fields that determine checkpoint compatibility: network shapes plus the
# noise-schedule identity. Two runs agree on these iff their checkpoints are
# interchangeable.
_HASH_FIELDS = (
    "image_size",
    "timesteps",
    "beta_min",
    "beta_max",
    "codec_mode",
    "latent_channels",
    "codec_downsample",
    "base_width",
    "style_dim",
)


@dataclass
class TrainConfig:
    """Hyperparameters for corpus rendering, training, and inference."""

    image_size: int = 64
    timesteps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    # None resolves to 1 for timesteps <= 100, else 20.
    sample_stride: int | None = None
    batch_size: int = 16
    learning_rate: float = 1e-4
    finetune_learning_rate: float = 1e-5
    epochs: int = 10
    finetune_epochs: int = 80
    n_refs: int = 8
    seed: int = 0
    codec_mode: str = "learned"
    latent_channels: int = 4
    codec_downsample: int = 4
    codec_epochs: int = 50
    base_width: int = 64
    style_dim: int = 128
    edge_loss_weight: float = 1.0
    feature_loss_weight: float = 0.05
    bnr_threshold: float = 0.5
    bnr_base_width: int = 32
    bnr_epochs: int = 20
    bnr_decode_mode: str = "estimate"
    classifier_epochs: int = 40

    def __post_init__(self) -> None:
        if self.image_size not in VALID_IMAGE_SIZES:
            raise ConfigurationError(
                f"image_size must be one of {VALID_IMAGE_SIZES}, got {self.image_size}"
            )
        if self.timesteps < 1:
            raise ConfigurationError(f"timesteps must be >= 1, got {self.timesteps}")
        if not (0.0 < self.beta_min <= self.beta_max < 1.0):
            raise ConfigurationError(
                f"need 0 < beta_min <= beta_max < 1, got [{self.beta_min}, {self.beta_max}]"
            )
        if self.sample_stride is not None and self.sample_stride < 1:
            raise ConfigurationError(f"sample_stride must be >= 1, got {self.sample_stride}")
        if self.codec_mode not in VALID_CODEC_MODES:
            raise ConfigurationError(
                f"codec_mode must be one of {VALID_CODEC_MODES}, got {self.codec_mode!r}"
            )
        if self.bnr_decode_mode not in VALID_BNR_DECODE_MODES:
            raise ConfigurationError(
                f"bnr_decode_mode must be one of {VALID_BNR_DECODE_MODES}, "
                f"got {self.bnr_decode_mode!r}"
            )
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.n_refs < 1:
            raise ConfigurationError(f"n_refs must be >= 1, got {self.n_refs}")
        if not 0.0 < self.bnr_threshold < 1.0:
            raise ConfigurationError(
                f"bnr_threshold must lie strictly inside (0, 1), got {self.bnr_threshold}"
            )
        for name in ("latent_channels", "codec_downsample", "base_width", "style_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def stride(self) -> int:
        """Resolved sampling stride (auto rule when unset)."""
        if self.sample_stride is not None:
            return self.sample_stride
        return 1 if self.timesteps <= 100 else 20

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
        return cls.from_dict(data)

    def compat_hash(self) -> str:
        """Digest over the fields that checkpoint compatibility depends on."""
        payload = {name: getattr(self, name) for name in _HASH_FIELDS}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
