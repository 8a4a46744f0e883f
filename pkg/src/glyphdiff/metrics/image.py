"""Pixel-level similarity metrics on [0, 1] grayscale images."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from ..errors import ValidationError

# Stabilizers for the structural-similarity ratio at unit dynamic range.
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _as_image(value, name: str) -> np.ndarray:
    arr = np.asarray(getattr(value, "pixels", value), dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D grayscale image, got shape {arr.shape}")
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")


def l1(a, b) -> float:
    """Mean absolute pixel difference."""
    a, b = _as_image(a, "a"), _as_image(b, "b")
    _check_same_shape(a, b)
    return float(np.mean(np.abs(a - b)))


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    half = window // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def ssim(a, b, window: int = 11, sigma: float = 1.5) -> float:
    """Mean local structural similarity with a Gaussian window.

    Local means and (co)variances are taken under a normalized Gaussian of
    the given width, with reflected borders; the reported value is the mean
    of the per-pixel similarity map. Symmetric in its arguments, and exactly
    1.0 when the images are identical.
    """
    a, b = _as_image(a, "a"), _as_image(b, "b")
    _check_same_shape(a, b)
    if window % 2 != 1 or window < 3:
        raise ValidationError(f"window must be an odd integer >= 3, got {window}")
    if window > min(a.shape):
        raise ValidationError(f"window {window} exceeds image extent {min(a.shape)}")
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")

    kernel = _gaussian_kernel(window, sigma)

    def smooth(img: np.ndarray) -> np.ndarray:
        out = correlate1d(img, kernel, axis=0, mode="reflect")
        return correlate1d(out, kernel, axis=1, mode="reflect")

    mu_a = smooth(a)
    mu_b = smooth(b)
    var_a = smooth(a * a) - mu_a * mu_a
    var_b = smooth(b * b) - mu_b * mu_b
    cov = smooth(a * b) - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return float(np.mean(num / den))


def grayscale_histogram(image, bins: int = 256) -> np.ndarray:
    """Intensity histogram over [0, 1] with equal-width bins (last bin closed)."""
    arr = _as_image(image, "image")
    if bins < 1:
        raise ValidationError(f"bins must be >= 1, got {bins}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError(
            f"pixel values must lie in [0, 1], got range [{arr.min()}, {arr.max()}]"
        )
    counts, _ = np.histogram(arr.ravel(), bins=bins, range=(0.0, 1.0))
    return counts.astype(np.float64)


def histogram_cosine(ha: np.ndarray, hb: np.ndarray) -> float:
    """Cosine similarity between two histograms of equal bin count."""
    ha = np.asarray(ha, dtype=np.float64)
    hb = np.asarray(hb, dtype=np.float64)
    if ha.ndim != 1 or hb.ndim != 1:
        raise ValidationError("histograms must be 1-D")
    if ha.shape != hb.shape:
        raise ValidationError(f"histogram bin counts differ: {ha.size} vs {hb.size}")
    na = float(np.linalg.norm(ha))
    nb = float(np.linalg.norm(hb))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cannot take cosine of an all-zero histogram")
    if np.array_equal(ha, hb):
        return 1.0
    # Cosine lies in [-1, 1] mathematically; clip roundoff spill.
    return float(min(max(np.dot(ha, hb) / (na * nb), -1.0), 1.0))


def grey(a, b, bins: int = 256) -> float:
    """Cosine similarity of the two images' grayscale histograms.

    Cosine is scale-invariant, so unequal pixel counts are handled by
    normalizing each histogram to unit mass first.
    """
    ha = grayscale_histogram(a, bins)
    hb = grayscale_histogram(b, bins)
    if ha.sum() != hb.sum():
        ha = ha / ha.sum()
        hb = hb / hb.sum()
    return histogram_cosine(ha, hb)
