"""Image summaries and accuracy metrics for reconstructed hyperspectral images.

These mirror how reconstructions are judged: collapse to a spatial
distribution, pull the momentum-transfer profile at the brightest spatial
bin, and compare against ground truth with spatial and spectral RMSE.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError
from .grid import HyperImage

__all__ = [
    "spatial_distribution",
    "display_transform",
    "mtp_extract",
    "spatial_rmse",
    "spectral_rmse",
    "cosine_similarity",
]


def _values(image) -> np.ndarray:
    if isinstance(image, HyperImage):
        return image.values
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError("expected an (S, Q) image array")
    return arr


def spatial_distribution(image) -> np.ndarray:
    """Spectral-bin sum, one value per spatial bin."""
    return _values(image).sum(axis=1)


def display_transform(spatial_dist: np.ndarray) -> np.ndarray:
    """Max-normalize then take the square root, for display scaling.

    Raises:
        ValidationError: all-zero input (nothing to normalize by).
    """
    spatial_dist = np.asarray(spatial_dist, dtype=np.float64).ravel()
    peak = spatial_dist.max(initial=0.0)
    if peak <= 0:
        raise ValidationError("display transform needs a positive maximum")
    return np.sqrt(spatial_dist / peak)


def mtp_extract(image) -> tuple[int, np.ndarray]:
    """Unit-energy momentum-transfer profile at the brightest spatial bin.

    The bin is the argmax of the spatial distribution, ties broken toward
    the smallest index.

    Raises:
        ValidationError: all-zero spatial distribution, or a zero spectrum at
            the selected bin.
    """
    values = _values(image)
    dist = values.sum(axis=1)
    if dist.max(initial=0.0) <= 0:
        raise ValidationError("cannot extract a profile from an all-zero image")
    s_star = int(np.argmax(dist))
    row = values[s_star]
    norm = float(np.sqrt(row @ row))
    if norm == 0:
        raise ValidationError(f"spatial bin {s_star} has a zero spectrum")
    return s_star, row / norm


def spatial_rmse(recon, truth) -> float:
    """RMSE between spatial distributions, over all spatial bins."""
    a = spatial_distribution(recon)
    b = spatial_distribution(truth)
    if a.shape != b.shape:
        raise ValidationError("images live on different grids")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def spectral_rmse(recon, truth) -> float:
    """RMSE between unit-energy spectra, over the truth's support bins.

    Every spatial bin where the truth has a nonzero spectrum contributes its
    full spectral axis; both spectra are normalized to unit energy first, so
    the metric measures profile shape, not intensity.  A zero reconstructed
    spectrum at a support bin counts as all-zero after normalization.
    """
    rv = _values(recon)
    tv = _values(truth)
    if rv.shape != tv.shape:
        raise ValidationError("images live on different grids")
    support = np.flatnonzero(np.sqrt(np.einsum("sq,sq->s", tv, tv)) > 0)
    if support.size == 0:
        raise ValidationError("truth image has empty support")
    sq_err = 0.0
    for s in support:
        t_row = tv[s] / np.linalg.norm(tv[s])
        r_norm = float(np.linalg.norm(rv[s]))
        r_row = rv[s] / r_norm if r_norm > 0 else np.zeros_like(rv[s])
        sq_err += float(np.sum((r_row - t_row) ** 2))
    return float(np.sqrt(sq_err / (support.size * rv.shape[1])))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two spectra (0 if either is zero)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b) / (na * nb)
