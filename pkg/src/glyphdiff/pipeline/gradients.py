"""Gradient-sensitivity probe: which parameter groups react to distribution shift.

Each probe setting builds one batch and measures per-tensor gradient norms of
the diffusion loss.  Batches for every setting are drawn with identically
seeded child generators, so any norm difference comes from the data pools,
not from sampling noise; when two settings share pools, their batches (and
therefore their ratios) coincide exactly.
"""

from __future__ import annotations

import os
from typing import Dict, Optional, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from ..backbone import (
    BASELINE_SETTING,
    NORM_KIND,
    PARAMETER_GROUPS,
    PROBE_SETTINGS,
    SensitivityReport,
    gradient_norms,
    sensitivity_ratios,
)
from ..errors import ValidationError
from ..glyphdata import GlyphCorpus
from .core import DiffusionPipeline

# probe setting -> (style pool attribute, char pool attribute)
_PROBE_POOLS: Dict[str, Tuple[str, str]] = {
    "scsf": ("seen_styles", "seen_chars"),
    "ucsf": ("seen_styles", "unseen_chars"),
    "scuf": ("unseen_styles", "seen_chars"),
}


def build_probe_batch(
    pipeline: DiffusionPipeline,
    corpus: GlyphCorpus,
    setting: str,
    batch_size: int,
    seed: int,
    n_refs: Optional[int] = None,
) -> dict:
    """One diffusion training batch drawn from a probe setting's pools.

    The index stream and the (t, noise) stream are re-seeded per call, so
    settings with identical pools produce bitwise-identical batches.
    """
    if setting not in _PROBE_POOLS:
        raise ValidationError(f"unknown probe setting {setting!r}; choose from {PROBE_SETTINGS}")
    if batch_size < 1:
        raise ValidationError(f"batch_size must be positive, got {batch_size}")
    manifest = corpus.manifest
    n_refs = pipeline.config.n_refs if n_refs is None else int(n_refs)
    style_attr, char_attr = _PROBE_POOLS[setting]
    styles = list(getattr(manifest, style_attr))
    chars = list(getattr(manifest, char_attr))
    ref_pool_all = list(manifest.seen_chars)
    if not styles or not chars:
        raise ValidationError(f"probe setting {setting!r} has an empty pool")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 13]))
    gen = torch.Generator().manual_seed(int(seed))
    canonical = manifest.canonical_style_id
    sources, targets, ref_sets = [], [], []
    for _ in range(batch_size):
        sid = styles[int(rng.integers(len(styles)))]
        cid = chars[int(rng.integers(len(chars)))]
        pool = [c for c in ref_pool_all if c != cid]
        if len(pool) < n_refs:
            raise ValidationError(f"not enough seen chars for {n_refs} references")
        picks = rng.choice(len(pool), size=n_refs, replace=False)
        sources.append(corpus.image(canonical, cid))
        targets.append(corpus.image(sid, cid))
        ref_sets.append([corpus.image(sid, pool[i]) for i in picks])
    z0 = pipeline.encode_images(targets)
    z_x = pipeline.encode_images(sources)
    refs = pipeline.refs_tensor(ref_sets)
    t = torch.randint(1, pipeline.schedule.timesteps + 1, (batch_size,), generator=gen)
    eps = torch.randn(z0.shape, generator=gen, dtype=z0.dtype)
    z_t = pipeline.add_noise(z0, t, eps)
    return {"z0": z0, "z_t": z_t, "z_x": z_x, "t": t, "refs": refs}


def probe_loss(model, batch: dict) -> torch.Tensor:
    """Diffusion loss on a probe batch, differentiable through the style path."""
    tokens = model.style_tokens(batch["refs"])
    pred = model.denoise(batch["z_t"], batch["z_x"], batch["t"], tokens)
    return torch.mean((pred - batch["z0"]) ** 2)


def sensitivity_analysis(
    pipeline: DiffusionPipeline,
    corpus: GlyphCorpus,
    batch_size: int = 64,
    seed: int = 0,
    n_refs: Optional[int] = None,
) -> SensitivityReport:
    """Per-group gradient-norm ratios of the shifted settings against the baseline."""
    pipeline.model.train()
    norms = {}
    for setting in PROBE_SETTINGS:
        batch = build_probe_batch(pipeline, corpus, setting, batch_size, seed, n_refs)
        norms[setting] = gradient_norms(pipeline.model, probe_loss, batch)
    pipeline.model.zero_grad(set_to_none=True)
    pipeline.model.eval()
    ratios = sensitivity_ratios(norms, pipeline.groups, baseline=BASELINE_SETTING)
    return SensitivityReport(
        batch_size=batch_size,
        baseline=BASELINE_SETTING,
        norm=NORM_KIND,
        group_ratios=ratios,
    )


def analyze_gradients(
    pipeline: DiffusionPipeline,
    corpus: GlyphCorpus,
    out_dir: str,
    batch_size: int = 64,
    seed: int = 0,
    n_refs: Optional[int] = None,
) -> Tuple[SensitivityReport, str, str]:
    """Run the probe and write the JSON report plus a grouped bar chart."""
    report = sensitivity_analysis(pipeline, corpus, batch_size, seed, n_refs)
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "sensitivity.json")
    chart_path = os.path.join(out_dir, "sensitivity.png")
    report.save(json_path)
    _plot_ratios(report, chart_path)
    return report, json_path, chart_path


def _plot_ratios(report: SensitivityReport, path: str) -> None:
    groups = [g for g in PARAMETER_GROUPS if g in next(iter(report.group_ratios.values()), {})]
    if not groups:
        groups = list(PARAMETER_GROUPS)
    settings = list(report.group_ratios)
    x = np.arange(len(groups), dtype=np.float64)
    width = 0.8 / max(len(settings), 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, setting in enumerate(settings):
        vals = [report.group_ratios[setting].get(g, 0.0) for g in groups]
        ax.bar(x + (i - (len(settings) - 1) / 2) * width, vals, width, label=setting)
    ax.axhline(1.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_xticks(x)
    ax.set_xticklabels(groups)
    ax.set_ylabel(f"gradient-norm ratio vs {report.baseline}")
    ax.set_title("parameter-group sensitivity under distribution shift")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
