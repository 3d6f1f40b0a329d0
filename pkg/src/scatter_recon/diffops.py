"""Spatial finite-difference operators on the reconstruction grid.

All differencing acts along the two spatial axes only; the spectral axis
rides along untouched.  Forward differences use a Dirichlet-zero boundary:
the neighbor value outside the grid is taken to be zero, so a boundary bin
still produces a difference (``0 - f``).  That keeps every spatial bin
incident to the same number of outgoing edges, which the solver's separable
surrogate relies on.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError
from .grid import ImageGrid

__all__ = [
    "NeighborStencil",
    "DEFAULT_STENCIL",
    "default_weights",
    "broadcast_weights",
    "forward_diff",
    "adjoint_diff",
    "incident_weight_sq",
]

# Each stencil entry is a (step_z, step_y) grid offset to a neighbor.
NeighborStencil = tuple[tuple[int, int], ...]

# Nearest neighbor below (z) and to the right (y).
DEFAULT_STENCIL: NeighborStencil = ((1, 0), (0, 1))


def _check_stencil(stencil: NeighborStencil) -> None:
    if len(stencil) == 0:
        raise ValidationError("stencil must contain at least one offset")
    for off in stencil:
        if len(off) != 2:
            raise ValidationError(f"stencil offset must be (step_z, step_y), got {off!r}")
        if off == (0, 0):
            raise ValidationError("stencil offset (0, 0) is not a neighbor")


def default_weights(grid: ImageGrid, stencil: NeighborStencil = DEFAULT_STENCIL) -> np.ndarray:
    """Default per-edge difference weights, shape ``(S, Q, N)``.

    The default is one over the step length in mm, uniform over space and
    spectrum: a one-bin step along z has length ``dz``, along y ``dy``, and
    diagonal steps use the Euclidean length.  Scaling differences by inverse
    length makes the penalty consistent across anisotropic grids.  Weights are
    stored per edge so callers can override them elementwise.
    """
    _check_stencil(stencil)
    lengths = np.array(
        [np.hypot(oz * grid.dz, oy * grid.dy) for oz, oy in stencil], dtype=np.float64
    )
    out = np.empty((grid.n_spatial, grid.n_spectral, len(stencil)))
    out[...] = 1.0 / lengths
    return out


def forward_diff(
    values: np.ndarray,
    grid: ImageGrid,
    stencil: NeighborStencil = DEFAULT_STENCIL,
) -> np.ndarray:
    """Unweighted forward differences of a hyperspectral image.

    Args:
        values: image array of shape ``(S, Q)``.
        grid: grid the image lives on.
        stencil: neighbor offsets, one difference per offset.

    Returns:
        Array of shape ``(S, Q, N)`` with entry ``[s, q, p]`` equal to
        ``f[neighbor_p(s), q] - f[s, q]``, the neighbor value being zero when
        the offset leaves the grid.
    """
    _check_stencil(stencil)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (grid.n_spatial, grid.n_spectral):
        raise ValidationError(
            f"expected image of shape {(grid.n_spatial, grid.n_spectral)}, "
            f"got {values.shape}"
        )
    cube = values.reshape(grid.nz, grid.ny, grid.n_spectral)
    out = np.empty((grid.nz, grid.ny, grid.n_spectral, len(stencil)))
    for p, (oz, oy) in enumerate(stencil):
        shifted = np.zeros_like(cube)
        src_z = slice(max(oz, 0), grid.nz + min(oz, 0))
        src_y = slice(max(oy, 0), grid.ny + min(oy, 0))
        dst_z = slice(max(-oz, 0), grid.nz + min(-oz, 0))
        dst_y = slice(max(-oy, 0), grid.ny + min(-oy, 0))
        shifted[dst_z, dst_y] = cube[src_z, src_y]
        out[..., p] = shifted - cube
    return out.reshape(grid.n_spatial, grid.n_spectral, len(stencil))


def adjoint_diff(
    diffs: np.ndarray,
    grid: ImageGrid,
    stencil: NeighborStencil = DEFAULT_STENCIL,
) -> np.ndarray:
    """Adjoint of :func:`forward_diff`, mapping ``(S, Q, N)`` back to ``(S, Q)``.

    Satisfies ``<forward_diff(f), d> == <f, adjoint_diff(d)>`` exactly for all
    ``f`` and ``d``.
    """
    _check_stencil(stencil)
    diffs = np.asarray(diffs, dtype=np.float64)
    expected = (grid.n_spatial, grid.n_spectral, len(stencil))
    if diffs.shape != expected:
        raise ValidationError(f"expected difference array of shape {expected}, got {diffs.shape}")
    cube = diffs.reshape(grid.nz, grid.ny, grid.n_spectral, len(stencil))
    out = np.zeros((grid.nz, grid.ny, grid.n_spectral))
    for p, (oz, oy) in enumerate(stencil):
        d = cube[..., p]
        out -= d
        # The +1 entry at the neighbor: bin s receives d from s - offset.
        src_z = slice(max(-oz, 0), grid.nz + min(-oz, 0))
        src_y = slice(max(-oy, 0), grid.ny + min(-oy, 0))
        dst_z = slice(max(oz, 0), grid.nz + min(oz, 0))
        dst_y = slice(max(oy, 0), grid.ny + min(oy, 0))
        out[dst_z, dst_y] += d[src_z, src_y]
    return out.reshape(grid.n_spatial, grid.n_spectral)


def broadcast_weights(
    weights: np.ndarray,
    grid: ImageGrid,
    stencil: NeighborStencil,
) -> np.ndarray:
    """Expand weights to the full per-edge shape ``(S, Q, N)``.

    Accepts anything broadcastable against an edge field, e.g. a length-N
    per-direction vector or an already-full array.
    """
    weights = np.asarray(weights, dtype=np.float64)
    try:
        return np.broadcast_to(
            weights, (grid.n_spatial, grid.n_spectral, len(stencil))
        ).astype(np.float64, copy=False)
    except ValueError:
        raise ValidationError(
            f"weights of shape {weights.shape} do not broadcast to "
            f"{(grid.n_spatial, grid.n_spectral, len(stencil))}"
        ) from None


def incident_weight_sq(
    grid: ImageGrid,
    stencil: NeighborStencil = DEFAULT_STENCIL,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Sum of squared weights over all difference edges touching each voxel.

    Every voxel owns one outgoing edge per stencil direction (the Dirichlet
    boundary keeps these alive at the edge of the grid) and receives one
    incoming edge per direction whose source lies inside the grid.  The
    result, shape ``(S, Q)``, bounds the diagonal of the weighted difference
    operator's normal matrix: twice it majorizes ``(G' W^2 G)_jj`` row-summed.
    """
    _check_stencil(stencil)
    if weights is None:
        weights = default_weights(grid, stencil)
    w2 = broadcast_weights(weights, grid, stencil) ** 2
    w2 = w2.reshape(grid.nz, grid.ny, grid.n_spectral, len(stencil))
    out = w2.sum(axis=-1)
    for p, (oz, oy) in enumerate(stencil):
        src_z = slice(max(-oz, 0), grid.nz + min(-oz, 0))
        src_y = slice(max(-oy, 0), grid.ny + min(-oy, 0))
        dst_z = slice(max(oz, 0), grid.nz + min(oz, 0))
        dst_y = slice(max(oy, 0), grid.ny + min(oy, 0))
        out[dst_z, dst_y] += w2[src_z, src_y, :, p]
    return out.reshape(grid.n_spatial, grid.n_spectral)
