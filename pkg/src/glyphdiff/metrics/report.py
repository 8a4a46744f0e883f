"""Per-pair metric rows and their aggregate report.

Reports are order-independent: pairs are sorted canonically before any
arithmetic and aggregate means use exact summation, so shuffling the input
pairs cannot change a single output bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import torch

from ..errors import ValidationError
from .classifier import (
    GlyphClassifier,
    classifier_features,
    classifier_param_hash,
    images_to_tensor,
)
from .fid import fid
from .image import grey, l1, ssim

EVAL_SETTINGS = ("scsf", "ucsf", "scuf", "ucuf")


@dataclass
class PairRecord:
    """Metrics for one generated/target pair."""

    char_id: int
    style_id: int
    l1: float
    ssim: float
    grey: float
    ocr_correct: bool


@dataclass
class MetricsReport:
    setting: str
    rows: list[PairRecord]
    aggregates: dict[str, float]
    meta: dict

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "rows": [asdict(r) for r in self.rows],
            "aggregates": dict(self.aggregates),
            "meta": dict(self.meta),
        }


def evaluate(
    generated: Sequence,
    targets: Sequence,
    setting: str,
    classifier: GlyphClassifier,
    bins: int = 256,
    window: int = 11,
) -> MetricsReport:
    """Score aligned generated/target pairs under one evaluation setting.

    Every pair contributes a row (pixel L1, structural similarity, histogram
    cosine, OCR hit); aggregates are the exact means of the rows plus OCR
    accuracy and, when at least two pairs exist, the feature-space Frechet
    distance between the full generated and target sets.
    """
    if setting not in EVAL_SETTINGS:
        raise ValidationError(f"setting must be one of {EVAL_SETTINGS}, got {setting!r}")
    if len(generated) == 0:
        raise ValidationError("no pairs to evaluate")
    if len(generated) != len(targets):
        raise ValidationError(f"got {len(generated)} generated but {len(targets)} targets")
    for gen, tgt in zip(generated, targets):
        if (gen.char_id, gen.style_id) != (tgt.char_id, tgt.style_id):
            raise ValidationError(
                f"pair identity mismatch: generated ({gen.char_id}, {gen.style_id}) "
                f"vs target ({tgt.char_id}, {tgt.style_id})"
            )

    pairs = sorted(zip(generated, targets), key=lambda p: (p[0].style_id, p[0].char_id))
    gen_sorted = [p[0] for p in pairs]
    tgt_sorted = [p[1] for p in pairs]

    hits = ocr_per_pair(gen_sorted, classifier)
    rows = []
    for (gen, tgt), hit in zip(pairs, hits):
        rows.append(
            PairRecord(
                char_id=gen.char_id,
                style_id=gen.style_id,
                l1=l1(gen.pixels, tgt.pixels),
                ssim=ssim(gen.pixels, tgt.pixels, window=window),
                grey=grey(gen.pixels, tgt.pixels, bins=bins),
                ocr_correct=hit,
            )
        )

    aggregates = aggregate_rows(rows)
    if len(rows) >= 2:
        aggregates["fid"] = fid(
            classifier_features(classifier, gen_sorted),
            classifier_features(classifier, tgt_sorted),
        )
    meta = {
        "bins": bins,
        "window": window,
        "n_pairs": len(rows),
        "classifier_hash": classifier_param_hash(classifier),
    }
    return MetricsReport(setting=setting, rows=rows, aggregates=aggregates, meta=meta)


def ocr_per_pair(generated: Sequence, classifier: GlyphClassifier) -> list[bool]:
    """Top-1 hit flag for each generated glyph against its own char_id."""
    wanted = [classifier.class_index(g.char_id) for g in generated]
    classifier.eval()
    with torch.no_grad():
        predicted = classifier(images_to_tensor(generated)).argmax(dim=1)
    return [int(p) == w for p, w in zip(predicted, wanted)]


def aggregate_rows(rows: Sequence[PairRecord]) -> dict[str, float]:
    """Exact-mean aggregates recomputable from the rows alone."""
    n = len(rows)
    if n == 0:
        raise ValidationError("cannot aggregate zero rows")
    return {
        "l1": math.fsum(r.l1 for r in rows) / n,
        "ssim": math.fsum(r.ssim for r in rows) / n,
        "grey": math.fsum(r.grey for r in rows) / n,
        "ocr_accuracy": math.fsum(1.0 for r in rows if r.ocr_correct) / n,
    }


def save_report(report: MetricsReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def load_report(path: str | Path) -> MetricsReport:
    data = json.loads(Path(path).read_text())
    rows = [PairRecord(**row) for row in data["rows"]]
    return MetricsReport(
        setting=data["setting"], rows=rows, aggregates=data["aggregates"], meta=data["meta"]
    )


def report_to_csv(report: MetricsReport, path: str | Path) -> None:
    """Flat per-pair table; floats are written with full round-trip precision."""
    lines = ["char_id,style_id,l1,ssim,grey,ocr_correct"]
    for r in report.rows:
        lines.append(
            f"{r.char_id},{r.style_id},{r.l1!r},{r.ssim!r},{r.grey!r},{int(r.ocr_correct)}"
        )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
