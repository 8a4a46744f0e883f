"""Frechet distance between Gaussian fits of two feature sets."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError

# Added to both covariance estimates before any square root; keeps the
# matrix square roots well defined when a feature dimension degenerates.
_RIDGE = 1e-6


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    # Symmetric PSD square root via eigendecomposition; tiny negative
    # eigenvalues from roundoff are clipped to zero.
    sym = (matrix + matrix.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def _fit_gaussian(features: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ValidationError(f"{name} must be 2-D (samples x features), got shape {feats.shape}")
    if feats.shape[0] < 2:
        raise ValidationError(f"{name} needs >= 2 samples for a covariance, got {feats.shape[0]}")
    mu = feats.mean(axis=0)
    cov = np.atleast_2d(np.cov(feats, rowvar=False))
    cov = cov + _RIDGE * np.eye(feats.shape[1])
    return mu, cov


def fid(features_a, features_b) -> float:
    """Squared mean gap plus the Bures covariance term, clamped at zero.

    Covariances use the unbiased estimator with a small ridge; the cross
    term is evaluated through the symmetric product sqrt(A) B sqrt(A), whose
    root shares its trace with the root of A B.
    """
    mu_a, cov_a = _fit_gaussian(features_a, "features_a")
    mu_b, cov_b = _fit_gaussian(features_b, "features_b")
    if mu_a.shape != mu_b.shape:
        raise ValidationError(
            f"feature dimensions differ: {mu_a.shape[0]} vs {mu_b.shape[0]}"
        )

    delta = mu_a - mu_b
    root_a = _sqrtm_psd(cov_a)
    cross = _sqrtm_psd(root_a @ cov_b @ root_a)
    value = float(delta @ delta + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    return max(value, 0.0)
