"""Evaluation metrics: pixel similarity, histogram cosine, feature-space FID, OCR."""

from .image import grayscale_histogram, grey, histogram_cosine, l1, ssim
from .fid import fid
from .classifier import (
    GlyphClassifier,
    classifier_features,
    classifier_param_hash,
    images_to_tensor,
    load_classifier,
    ocr_accuracy,
    save_classifier,
    train_classifier,
)
from .report import (
    EVAL_SETTINGS,
    MetricsReport,
    PairRecord,
    aggregate_rows,
    evaluate,
    load_report,
    ocr_per_pair,
    report_to_csv,
    save_report,
)

__all__ = [
    "grayscale_histogram",
    "grey",
    "histogram_cosine",
    "l1",
    "ssim",
    "fid",
    "GlyphClassifier",
    "classifier_features",
    "classifier_param_hash",
    "images_to_tensor",
    "load_classifier",
    "ocr_accuracy",
    "save_classifier",
    "train_classifier",
    "EVAL_SETTINGS",
    "MetricsReport",
    "PairRecord",
    "aggregate_rows",
    "evaluate",
    "load_report",
    "ocr_per_pair",
    "report_to_csv",
    "save_report",
]
