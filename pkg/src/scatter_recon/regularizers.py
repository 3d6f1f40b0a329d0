"""Total-variation penalties over spatial differences, grouped and plain.

Both penalties act on the weighted forward differences of a hyperspectral
image, an array of shape ``(S, Q, N)``.  The grouped variant takes one
Euclidean norm per spatial bin across all ``Q * N`` difference entries, so
edges shared by many spectral channels are counted once; the standard variant
takes one norm per ``(s, q)`` pair across the ``N`` directions and sums them.
By the triangle inequality the grouped value never exceeds the standard one.
"""

from __future__ import annotations

import numpy as np

from .diffops import DEFAULT_STENCIL, NeighborStencil, default_weights, forward_diff
from .exceptions import ValidationError
from .grid import ImageGrid

__all__ = [
    "weighted_diffs",
    "group_norms",
    "standard_norms",
    "group_tv",
    "standard_tv",
    "tv_penalty",
    "block_shrink",
    "shrink_standard",
]


def weighted_diffs(
    values: np.ndarray,
    grid: ImageGrid,
    stencil: NeighborStencil = DEFAULT_STENCIL,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Forward differences scaled per direction, shape ``(S, Q, N)``."""
    if weights is None:
        weights = default_weights(grid, stencil)
    return forward_diff(values, grid, stencil) * np.asarray(weights, dtype=np.float64)


def group_norms(diffs: np.ndarray) -> np.ndarray:
    """Per-spatial-bin Euclidean norms over the spectral and direction axes."""
    diffs = np.asarray(diffs, dtype=np.float64)
    if diffs.ndim != 3:
        raise ValidationError(f"expected (S, Q, N) difference array, got ndim={diffs.ndim}")
    return np.sqrt(np.einsum("sqn,sqn->s", diffs, diffs))


def standard_norms(diffs: np.ndarray) -> np.ndarray:
    """Per-(spatial, spectral) Euclidean norms over the direction axis."""
    diffs = np.asarray(diffs, dtype=np.float64)
    if diffs.ndim != 3:
        raise ValidationError(f"expected (S, Q, N) difference array, got ndim={diffs.ndim}")
    return np.sqrt(np.einsum("sqn,sqn->sq", diffs, diffs))


def group_tv(
    values: np.ndarray,
    grid: ImageGrid,
    stencil: NeighborStencil = DEFAULT_STENCIL,
    weights: np.ndarray | None = None,
) -> float:
    """Spectrally grouped total variation of an ``(S, Q)`` image."""
    return float(group_norms(weighted_diffs(values, grid, stencil, weights)).sum())


def standard_tv(
    values: np.ndarray,
    grid: ImageGrid,
    stencil: NeighborStencil = DEFAULT_STENCIL,
    weights: np.ndarray | None = None,
) -> float:
    """Channel-by-channel total variation of an ``(S, Q)`` image."""
    return float(standard_norms(weighted_diffs(values, grid, stencil, weights)).sum())


def tv_penalty(
    values: np.ndarray,
    grid: ImageGrid,
    kind: str,
    stencil: NeighborStencil = DEFAULT_STENCIL,
    weights: np.ndarray | None = None,
) -> float:
    """Dispatch on the regularizer name used in solver configuration."""
    if kind == "group_tv":
        return group_tv(values, grid, stencil, weights)
    if kind == "standard_tv":
        return standard_tv(values, grid, stencil, weights)
    raise ValidationError(f"unknown regularizer {kind!r}")


def block_shrink(blocks: np.ndarray, tau: float, kind: str = "group_tv") -> np.ndarray:
    """Proximal map of ``tau`` times the sum of block norms.

    Args:
        blocks: array of shape ``(S, Q, N)``.
        tau: threshold, ``>= 0``.
        kind: ``"group_tv"`` shrinks one block per spatial bin (all ``Q * N``
            entries together); ``"standard_tv"`` shrinks one block per
            ``(s, q)`` pair.

    Returns:
        Array of the same shape; each block is scaled by
        ``max(1 - tau / ||block||, 0)``, with zero blocks staying zero.
    """
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim != 3:
        raise ValidationError(f"expected (S, Q, N) block array, got ndim={blocks.ndim}")
    if tau < 0:
        raise ValidationError(f"shrink threshold must be >= 0, got {tau}")
    if kind == "group_tv":
        norms = group_norms(blocks)[:, None, None]
    elif kind == "standard_tv":
        norms = standard_norms(blocks)[:, :, None]
    else:
        raise ValidationError(f"unknown regularizer {kind!r}")
    scale = np.zeros_like(norms)
    np.divide(norms - tau, norms, out=scale, where=norms > 0)
    return blocks * np.maximum(scale, 0.0)


def shrink_standard(blocks: np.ndarray, tau: float) -> np.ndarray:
    """Per-(s, q) block shrinkage, the d-update for the channel-wise penalty."""
    return block_shrink(blocks, tau, kind="standard_tv")
