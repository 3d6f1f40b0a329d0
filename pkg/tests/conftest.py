"""Shared helpers for building small seeded problem instances."""

from __future__ import annotations

import numpy as np

from scatter_recon import MeasurementSet, build_grid, make_system, poisson_sample
from scatter_recon.grid import ImageGrid, SparseSystemMatrix
from scatter_recon.likelihood import forward_project


def small_instance(
    nz: int = 4,
    ny: int = 3,
    n_spectral: int = 4,
    seed: int = 0,
    density: float = 0.35,
    rows_per_voxel: int = 2,
    background: float = 0.5,
):
    """A seeded random problem with Poisson counts and a known mean image.

    Returns (grid, matrix, measurements, f_true) with f_true of shape (S, Q).
    """
    grid = build_grid(nz, ny, n_spectral, 1.0, 1.0, 0.05, 0.45)
    n_rows = rows_per_voxel * grid.n_voxels
    matrix = make_system(grid, n_rows, density, seed)
    rng = np.random.default_rng(seed + 1000)
    f_true = rng.uniform(0.0, 30.0, size=(grid.n_spatial, grid.n_spectral))
    r = np.full(n_rows, background)
    means = forward_project(matrix, f_true.ravel(), r)
    counts = poisson_sample(means, seed + 2000)
    return grid, matrix, MeasurementSet(counts, r), f_true


def random_sparse(n_rows: int, n_cols: int, density: float, seed: int) -> SparseSystemMatrix:
    """A raw random sparse matrix without column rescaling."""
    rng = np.random.default_rng(seed)
    mask = rng.random((n_rows, n_cols)) < density
    dense = np.where(mask, rng.uniform(0.5, 1.5, size=(n_rows, n_cols)), 0.0)
    return SparseSystemMatrix.from_dense(dense)


def random_grid(seed: int) -> ImageGrid:
    rng = np.random.default_rng(seed)
    return build_grid(
        int(rng.integers(1, 6)),
        int(rng.integers(1, 6)),
        int(rng.integers(1, 5)),
        float(rng.uniform(0.5, 5.0)),
        float(rng.uniform(0.5, 5.0)),
        0.05,
        0.45,
    )
