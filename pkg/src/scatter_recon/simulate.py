"""Synthetic desk-scale problems: phantoms, mixing operators, Poisson draws.

The generator is the stand-in for real multiplexed scatter hardware: a
phantom with known per-material momentum-transfer templates, a random
nonnegative mixing matrix with unit column sums, and seeded Poisson counts.
Everything is reproducible byte-for-byte from the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ValidationError
from .grid import HyperImage, ImageGrid, MeasurementSet, SparseSystemMatrix, build_grid
from .likelihood import forward_project

__all__ = [
    "Region",
    "Phantom",
    "FixtureBundle",
    "gaussian_mixture_template",
    "make_phantom",
    "make_system",
    "poisson_sample",
    "default_fixture",
]


@dataclass(frozen=True)
class Region:
    """Rectangular patch of one material on the spatial grid.

    ``z0, y0`` is the top-left bin, ``height`` extends along z and ``width``
    along y.  The template is a nonnegative length-Q spectrum; it is stored
    normalized to unit energy (sum of squares 1), with ``amplitude`` carrying
    the overall intensity.
    """

    z0: int
    y0: int
    height: int
    width: int
    template: np.ndarray
    amplitude: float


@dataclass
class Phantom:
    """Region labels plus per-region spectra; label 0 is empty background."""

    grid: ImageGrid
    labels: np.ndarray
    templates: np.ndarray
    amplitudes: np.ndarray


def gaussian_mixture_template(
    n_spectral: int,
    centers: Sequence[float],
    width: float | Sequence[float],
    heights: Sequence[float] | None = None,
) -> np.ndarray:
    """Sum of Gaussian bumps over bin index, normalized to unit energy."""
    if n_spectral < 1:
        raise ValidationError("template needs at least one spectral bin")
    widths = np.broadcast_to(np.asarray(width, dtype=np.float64), (len(centers),))
    if np.any(widths <= 0):
        raise ValidationError("Gaussian widths must be positive")
    if heights is None:
        heights = np.ones(len(centers))
    q = np.arange(n_spectral, dtype=np.float64)
    profile = np.zeros(n_spectral)
    for c, w, h in zip(centers, widths, heights):
        profile += h * np.exp(-((q - c) ** 2) / (2.0 * w**2))
    norm = float(np.sqrt(profile @ profile))
    if norm == 0:
        raise ValidationError("template is identically zero")
    return profile / norm


def make_phantom(grid: ImageGrid, regions: Sequence[Region]) -> tuple[Phantom, HyperImage]:
    """Assemble a labeled phantom and its ground-truth hyperspectral image.

    Each spatial bin inside region k gets the spectrum
    ``amplitude_k * template_k``; bins outside every region stay zero.

    Raises:
        ValidationError: a region leaves the grid or two regions overlap.
    """
    labels = np.zeros(grid.n_spatial, dtype=np.int64)
    templates = [np.zeros(grid.n_spectral)]
    amplitudes = [0.0]
    for k, region in enumerate(regions, start=1):
        if region.height < 1 or region.width < 1:
            raise ValidationError(f"region {k} has empty extent")
        if (
            region.z0 < 0
            or region.y0 < 0
            or region.z0 + region.height > grid.nz
            or region.y0 + region.width > grid.ny
        ):
            raise ValidationError(f"region {k} does not fit inside the grid")
        template = np.asarray(region.template, dtype=np.float64)
        if template.shape != (grid.n_spectral,):
            raise ValidationError(
                f"region {k} template has shape {template.shape}, expected "
                f"({grid.n_spectral},)"
            )
        if np.any(template < 0):
            raise ValidationError(f"region {k} template has negative entries")
        if region.amplitude < 0:
            raise ValidationError(f"region {k} amplitude must be nonnegative")
        for z in range(region.z0, region.z0 + region.height):
            for y in range(region.y0, region.y0 + region.width):
                s = z * grid.ny + y
                if labels[s] != 0:
                    raise ValidationError(
                        f"regions {labels[s]} and {k} overlap at spatial bin {s}"
                    )
                labels[s] = k
        templates.append(template)
        amplitudes.append(float(region.amplitude))
    phantom = Phantom(
        grid=grid,
        labels=labels,
        templates=np.vstack(templates),
        amplitudes=np.asarray(amplitudes),
    )
    values = phantom.amplitudes[labels, None] * phantom.templates[labels]
    return phantom, HyperImage(grid, values)


def make_system(
    grid: ImageGrid,
    n_rows: int,
    density: float,
    seed: int,
) -> SparseSystemMatrix:
    """Random nonnegative multiplexing operator with unit column sums.

    Each entry is nonzero with probability ``density`` and drawn from
    Uniform(0.5, 1.5); any all-zero row is redrawn; finally every column is
    rescaled to sum to one, removing trivial sensitivity differences between
    voxels.  Generation is row by row in a fixed order from a PCG64 stream,
    so a seed pins the matrix exactly.
    """
    if not 0 < density <= 1:
        raise ValidationError(f"density must be in (0, 1], got {density}")
    if n_rows < 1:
        raise ValidationError("matrix needs at least one row")
    n_cols = grid.n_voxels
    rng = np.random.Generator(np.random.PCG64(seed))
    row_idx: list[np.ndarray] = []
    col_idx: list[np.ndarray] = []
    values: list[np.ndarray] = []
    for i in range(n_rows):
        mask = rng.random(n_cols) < density
        while not mask.any():
            mask = rng.random(n_cols) < density
        cols = np.flatnonzero(mask)
        row_idx.append(np.full(cols.size, i, dtype=np.int64))
        col_idx.append(cols)
        values.append(rng.uniform(0.5, 1.5, cols.size))
    rows = np.concatenate(row_idx)
    cols = np.concatenate(col_idx)
    vals = np.concatenate(values)
    col_sums = np.zeros(n_cols)
    np.add.at(col_sums, cols, vals)
    if np.any(col_sums == 0):
        raise ValidationError(
            "generated matrix has an empty column; increase density or rows"
        )
    vals = vals / col_sums[cols]
    return SparseSystemMatrix(n_rows, n_cols, rows, cols, vals)


def _poisson_inversion(mu: float, rng: np.random.Generator) -> int:
    p = math.exp(-mu)
    cum = p
    k = 0
    u = rng.random()
    while u > cum:
        k += 1
        p *= mu / k
        cum += p
    return k


def _poisson_ptrs(mu: float, rng: np.random.Generator) -> int:
    smu = math.sqrt(mu)
    lmu = math.log(mu)
    b = 0.931 + 2.53 * smu
    a = -0.059 + 0.02483 * b
    alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + mu + 0.43)
        if us >= 0.07 and v <= v_r:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v * alpha / (a / (us * us) + b)) <= k * lmu - mu - math.lgamma(k + 1.0):
            return int(k)


def poisson_sample(means: np.ndarray, seed: int) -> np.ndarray:
    """Element-wise Poisson draws from a pinned, portable algorithm.

    Uses sequential inversion for means below 10 and Hormann's transformed
    rejection with squeeze (PTRS) at 10 and above, consuming uniforms from a
    PCG64 stream in element order.  The algorithm is fixed here rather than
    delegated to a platform default so fixtures reproduce bit-for-bit
    anywhere.
    """
    means = np.asarray(means, dtype=np.float64).ravel()
    if np.any(means < 0) or not np.all(np.isfinite(means)):
        raise ValidationError("Poisson means must be finite and nonnegative")
    rng = np.random.Generator(np.random.PCG64(seed))
    out = np.empty(means.size, dtype=np.int64)
    for i, mu in enumerate(means):
        if mu == 0.0:
            out[i] = 0
        elif mu < 10.0:
            out[i] = _poisson_inversion(mu, rng)
        else:
            out[i] = _poisson_ptrs(mu, rng)
    return out


@dataclass
class FixtureBundle:
    """A complete synthetic problem with known ground truth."""

    grid: ImageGrid
    phantom: Phantom
    truth: HyperImage
    matrix: SparseSystemMatrix
    measurements: MeasurementSet
    means: np.ndarray
    seed: int


# Default acceptance fixture layout: one 3x2 two-peak material patch on an
# 8x8 grid with 16 spectral bins, detector count twice the voxel count.
_FIXTURE_SHAPE = dict(nz=8, ny=8, n_spectral=16, dz=1.0, dy=1.0, q_min=0.05, q_max=0.45)
_FIXTURE_REGION = dict(z0=3, y0=3, height=3, width=2)
_FIXTURE_CENTERS = (4.0, 10.0)
_FIXTURE_WIDTH = 1.5
_FIXTURE_DENSITY = 0.1
_FIXTURE_MEAN_COUNTS = 26.0
_FIXTURE_BACKGROUND = 13.0


def default_fixture(seed: int = 0) -> FixtureBundle:
    """The standard synthetic instance used for end-to-end verification.

    8x8 spatial bins, 16 spectral bins, a single 3x2 region whose template is
    two Gaussians (centers at bins 4 and 10, width 1.5 bins), a density-0.1
    mixing matrix with twice as many detector elements as voxels, and a
    constant background.  The region amplitude is calibrated so the mean
    count per detector element is 26, the scale of the real system this
    stands in for.
    """
    grid = build_grid(
        _FIXTURE_SHAPE["nz"],
        _FIXTURE_SHAPE["ny"],
        _FIXTURE_SHAPE["n_spectral"],
        _FIXTURE_SHAPE["dz"],
        _FIXTURE_SHAPE["dy"],
        _FIXTURE_SHAPE["q_min"],
        _FIXTURE_SHAPE["q_max"],
    )
    n_rows = 2 * grid.n_voxels
    template = gaussian_mixture_template(
        grid.n_spectral, _FIXTURE_CENTERS, _FIXTURE_WIDTH
    )
    n_region_bins = _FIXTURE_REGION["height"] * _FIXTURE_REGION["width"]
    signal_total = (_FIXTURE_MEAN_COUNTS - _FIXTURE_BACKGROUND) * n_rows
    amplitude = signal_total / (n_region_bins * float(template.sum()))
    region = Region(template=template, amplitude=amplitude, **_FIXTURE_REGION)
    phantom, truth = make_phantom(grid, [region])
    matrix = make_system(grid, n_rows, _FIXTURE_DENSITY, seed)
    background = np.full(n_rows, _FIXTURE_BACKGROUND)
    means = forward_project(matrix, truth.flat, background)
    counts = poisson_sample(means, seed + 1)
    measurements = MeasurementSet(counts, background)
    return FixtureBundle(
        grid=grid,
        phantom=phantom,
        truth=truth,
        matrix=matrix,
        measurements=measurements,
        means=means,
        seed=seed,
    )
