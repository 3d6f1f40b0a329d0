"""Poisson measurement model: means, negative log-likelihood, EM pieces.

The model for detector element i is ``y_i ~ Poisson(sum_j a_ij f_j + r_i)``
with known nonnegative background ``r``.  The negative log-likelihood drops
the constant ``log(y_i!)`` term throughout, so reported values can be
negative; only differences matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleMeanError, ValidationError
from .grid import MeasurementSet, SparseSystemMatrix

__all__ = [
    "MEAN_FLOOR",
    "SurrogateCoeffs",
    "forward_project",
    "neg_log_likelihood",
    "count_ratio",
    "nll_gradient",
    "em_coeffs",
]

# Floor applied to a positive mean inside ratios only, to keep y/mean finite
# when the mean underflows toward zero.  Never applied to the mean itself.
MEAN_FLOOR = 1e-300


def forward_project(
    matrix: SparseSystemMatrix,
    image_flat: np.ndarray,
    background: np.ndarray,
) -> np.ndarray:
    """Predicted Poisson means ``A f + r``."""
    image_flat = np.asarray(image_flat, dtype=np.float64).ravel()
    background = np.asarray(background, dtype=np.float64).ravel()
    if background.size != matrix.n_rows:
        raise ValidationError(
            f"background length {background.size} does not match {matrix.n_rows} rows"
        )
    return matrix.matvec(image_flat) + background


def _check_feasible(counts: np.ndarray, means: np.ndarray) -> None:
    if np.any(means < 0):
        raise ValidationError("Poisson means must be nonnegative")
    bad = np.flatnonzero((means == 0) & (counts > 0))
    if bad.size:
        raise InfeasibleMeanError(
            f"{bad.size} measurement(s) observed counts where the model mean is "
            f"exactly zero (first index {bad[0]}); the likelihood is infinite"
        )


def neg_log_likelihood(counts: np.ndarray, means: np.ndarray) -> float:
    """``sum_i (mean_i - y_i * ln(mean_i))``, the log-factorial constant dropped.

    Raises:
        InfeasibleMeanError: if some ``mean_i == 0`` while ``y_i > 0``.
    """
    counts = np.asarray(counts, dtype=np.float64).ravel()
    means = np.asarray(means, dtype=np.float64).ravel()
    if counts.shape != means.shape:
        raise ValidationError("counts and means must have equal length")
    _check_feasible(counts, means)
    pos = counts > 0
    value = float(means.sum())
    value -= float(np.dot(counts[pos], np.log(means[pos])))
    return value


def count_ratio(counts: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Elementwise ``y / mean``, defined as 0 where ``y == 0``.

    The Poisson gradient and EM back-projection only ever need the ratio on
    rows with observed counts, so zero-count rows contribute nothing even when
    their mean is zero.
    """
    counts = np.asarray(counts, dtype=np.float64).ravel()
    means = np.asarray(means, dtype=np.float64).ravel()
    if counts.shape != means.shape:
        raise ValidationError("counts and means must have equal length")
    _check_feasible(counts, means)
    ratio = np.zeros_like(means)
    pos = counts > 0
    ratio[pos] = counts[pos] / np.maximum(means[pos], MEAN_FLOOR)
    return ratio


def nll_gradient(
    matrix: SparseSystemMatrix,
    counts: np.ndarray,
    means: np.ndarray,
) -> np.ndarray:
    """Gradient of :func:`neg_log_likelihood` with respect to the image.

    Equals ``A' (1 - y / mean)``, length J.
    """
    ratio = count_ratio(counts, means)
    return matrix.rmatvec(1.0 - ratio)


@dataclass(frozen=True)
class SurrogateCoeffs:
    """Coefficients of the separable EM surrogate of the likelihood.

    At expansion point ``f_ref`` the surrogate is
    ``sum_j (sigma_j * f_j - e_j * ln(f_j))`` up to a constant, with
    ``e_j = f_ref_j * [A' (y / mean)]_j`` and ``sigma_j`` the column sums of
    the system matrix.  It touches the likelihood at ``f_ref`` and lies above
    it everywhere on the nonnegative orthant.
    """

    e: np.ndarray
    sigma: np.ndarray


def em_coeffs(
    matrix: SparseSystemMatrix,
    measurements: MeasurementSet,
    image_flat: np.ndarray,
) -> SurrogateCoeffs:
    """EM surrogate coefficients at the current image.

    With no penalty the surrogate's minimizer is the classic EM update
    ``f * backprojected_ratio / sigma``.
    """
    image_flat = np.asarray(image_flat, dtype=np.float64).ravel()
    means = forward_project(matrix, image_flat, measurements.background)
    ratio = count_ratio(measurements.counts, means)
    e = image_flat * matrix.rmatvec(ratio)
    return SurrogateCoeffs(e=e, sigma=matrix.col_sums.copy())
