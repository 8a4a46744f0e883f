"""Gradient-magnitude sensitivity: which parameters react to distribution shift.

For a probe batch under each evaluation setting, the per-parameter gradient
magnitude is the L2 norm of that tensor's loss gradient. Ratios against the
seen-char/seen-font baseline, averaged per group, show which groups carry
style versus content sensitivity. The baseline's own row is identically 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import torch

from ..errors import NumericsError, StateError, ValidationError

BASELINE_SETTING = "scsf"
PROBE_SETTINGS = ("scsf", "ucsf", "scuf")
NORM_KIND = "l2_per_tensor"


def gradient_norms(
    model: torch.nn.Module,
    loss_fn: Callable[[torch.nn.Module, object], torch.Tensor],
    batch: object,
) -> dict[str, float]:
    """Per-parameter-tensor L2 gradient norms of ``loss_fn`` over one batch."""
    model.zero_grad(set_to_none=True)
    loss = loss_fn(model, batch)
    if not torch.isfinite(loss):
        raise NumericsError(f"probe loss is non-finite: {float(loss.detach())}")
    loss.backward()
    norms: dict[str, float] = {}
    for name, param in model.named_parameters():
        if param.grad is None:
            raise StateError(f"parameter {name} received no gradient from the probe loss")
        norms[name] = float(torch.linalg.vector_norm(param.grad.detach().to(torch.float64)))
    model.zero_grad(set_to_none=True)
    return norms


def sensitivity_ratios(
    norms_by_setting: Mapping[str, Mapping[str, float]],
    param_groups: Mapping[str, str],
    baseline: str = BASELINE_SETTING,
) -> dict[str, dict[str, float]]:
    """Per-group mean of per-parameter norm ratios against the baseline setting."""
    if baseline not in norms_by_setting:
        raise ValidationError(f"baseline setting {baseline!r} missing from norms")
    base = norms_by_setting[baseline]
    names = sorted(base)
    for setting, norms in norms_by_setting.items():
        if sorted(norms) != names:
            raise ValidationError(f"setting {setting!r} covers different parameters than baseline")
    for name in names:
        if name not in param_groups:
            raise ValidationError(f"parameter {name} missing from the group map")
        if base[name] == 0.0:
            raise NumericsError(f"baseline gradient norm is zero for {name}; ratios undefined")

    group_names = sorted(set(param_groups[n] for n in names))
    out: dict[str, dict[str, float]] = {}
    for setting, norms in norms_by_setting.items():
        per_group: dict[str, list[float]] = {g: [] for g in group_names}
        for name in names:
            per_group[param_groups[name]].append(norms[name] / base[name])
        out[setting] = {g: math.fsum(r) / len(r) for g, r in per_group.items() if r}
    return out


@dataclass
class SensitivityReport:
    batch_size: int
    baseline: str
    norm: str
    group_ratios: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "baseline": self.baseline,
            "norm": self.norm,
            "group_ratios": {s: dict(g) for s, g in self.group_ratios.items()},
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SensitivityReport":
        data = json.loads(Path(path).read_text())
        return cls(
            batch_size=int(data["batch_size"]),
            baseline=str(data["baseline"]),
            norm=str(data["norm"]),
            group_ratios={s: dict(g) for s, g in data["group_ratios"].items()},
        )
