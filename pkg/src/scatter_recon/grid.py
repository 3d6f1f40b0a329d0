"""Core data model: image grid, hyperspectral image, forward operator, measurements.

Conventions used throughout the package:

* Spatial bins are laid out on an ``nz x ny`` grid and linearized as
  ``s = iz * ny + iy``.
* Hyper-voxels are linearized spectral-fastest, ``j = s * Q + q``, so the
  momentum-transfer profile of one spatial bin is a contiguous block.  A
  ``(S, Q)`` C-ordered array raveled with :func:`numpy.ravel` realizes exactly
  this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import ValidationError

__all__ = [
    "ImageGrid",
    "HyperImage",
    "SparseSystemMatrix",
    "MeasurementSet",
    "SolverConfig",
    "ProblemDiagnostics",
    "build_grid",
    "validate_problem",
]


@dataclass(frozen=True)
class ImageGrid:
    """Geometry of the reconstruction grid.

    Attributes:
        nz: number of spatial bins along z.
        ny: number of spatial bins along y.
        n_spectral: number of momentum-transfer bins per spatial bin.
        dz: pitch along z (mm).
        dy: pitch along y (mm).
        q_min: lowest momentum-transfer bin center (1/angstrom).
        q_max: highest momentum-transfer bin center (1/angstrom).
    """

    nz: int
    ny: int
    n_spectral: int
    dz: float
    dy: float
    q_min: float
    q_max: float

    def __post_init__(self) -> None:
        if self.nz < 1 or self.ny < 1 or self.n_spectral < 1:
            raise ValidationError(
                f"grid dimensions must be >= 1, got nz={self.nz} ny={self.ny} "
                f"Q={self.n_spectral}"
            )
        if not (self.dz > 0 and self.dy > 0):
            raise ValidationError(f"pitches must be positive, got dz={self.dz} dy={self.dy}")
        if not self.q_min < self.q_max:
            raise ValidationError(
                f"momentum-transfer range must satisfy q_min < q_max, got "
                f"[{self.q_min}, {self.q_max}]"
            )

    @property
    def n_spatial(self) -> int:
        """Total number of spatial bins S."""
        return self.nz * self.ny

    @property
    def n_voxels(self) -> int:
        """Total number of hyper-voxels J = S * Q."""
        return self.n_spatial * self.n_spectral

    @property
    def q_step(self) -> float:
        """Spacing between spectral bin centers (0 for a single bin)."""
        if self.n_spectral == 1:
            return 0.0
        return (self.q_max - self.q_min) / (self.n_spectral - 1)

    def q_centers(self) -> np.ndarray:
        """Spectral bin centers, endpoints inclusive."""
        return np.linspace(self.q_min, self.q_max, self.n_spectral)

    def linearize(self, s: int, q: int) -> int:
        """Flat hyper-voxel index of spatial bin ``s``, spectral bin ``q``."""
        return s * self.n_spectral + q

    def unlinearize(self, j: int) -> tuple[int, int]:
        """Inverse of :meth:`linearize`."""
        return divmod(j, self.n_spectral)


def build_grid(
    nz: int,
    ny: int,
    n_spectral: int,
    dz: float,
    dy: float,
    q_min: float,
    q_max: float,
) -> ImageGrid:
    """Construct and validate an :class:`ImageGrid`."""
    return ImageGrid(
        nz=int(nz),
        ny=int(ny),
        n_spectral=int(n_spectral),
        dz=float(dz),
        dy=float(dy),
        q_min=float(q_min),
        q_max=float(q_max),
    )


@dataclass
class HyperImage:
    """Nonnegative hyperspectral image over a grid.

    ``values`` has shape ``(S, Q)``; ``values.ravel()`` is the lexicographic
    (spectral-fastest) vector of length J.
    """

    grid: ImageGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (self.grid.n_spatial, self.grid.n_spectral)
        if self.values.shape != expected:
            if self.values.size == self.grid.n_voxels:
                self.values = self.values.reshape(expected)
            else:
                raise ValidationError(
                    f"image has {self.values.size} values, grid expects "
                    f"{self.grid.n_voxels}"
                )
        if np.any(self.values < 0):
            raise ValidationError("hyperspectral image values must be nonnegative")

    @property
    def flat(self) -> np.ndarray:
        """Length-J view with index j = s * Q + q."""
        return self.values.ravel()

    @classmethod
    def from_flat(cls, grid: ImageGrid, flat: np.ndarray) -> "HyperImage":
        return cls(grid, np.asarray(flat, dtype=np.float64).reshape(grid.n_spatial, grid.n_spectral))


class SparseSystemMatrix:
    """Nonnegative sparse forward operator in triplet form.

    Stored triplets must have strictly positive values and no duplicate
    ``(row, col)`` pairs (duplicates usually indicate ingestion bugs and are
    rejected rather than summed).  Products are delegated to cached
    :mod:`scipy.sparse` CSR/CSC forms; both matvec directions use fixed
    summation order, so results are reproducible across runs and thread
    counts.
    """

    def __init__(self, n_rows: int, n_cols: int, rows, cols, vals) -> None:
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise ValidationError("triplet arrays must be 1-D and of equal length")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValidationError("matrix dimensions must be >= 1")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_rows:
                raise ValidationError("triplet row index out of bounds")
            if cols.min() < 0 or cols.max() >= self.n_cols:
                raise ValidationError("triplet column index out of bounds")
        if np.any(vals <= 0):
            raise ValidationError("triplet values must be strictly positive")
        flat = rows * self.n_cols + cols
        if np.unique(flat).size != flat.size:
            raise ValidationError("duplicate (row, col) triplets are not allowed")
        order = np.argsort(flat, kind="stable")
        self.rows = rows[order]
        self.cols = cols[order]
        self.vals = vals[order]
        self._csr = sp.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols)
        )
        self._csc = self._csr.tocsc()
        self.col_sums = np.asarray(self._csr.sum(axis=0)).ravel()

    @property
    def nnz(self) -> int:
        return self.vals.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """A @ x for a length-J vector."""
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.n_cols:
            raise ValidationError(f"matvec expects length {self.n_cols}, got {x.size}")
        return self._csr @ x

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """A.T @ y for a length-I vector."""
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.size != self.n_rows:
            raise ValidationError(f"rmatvec expects length {self.n_rows}, got {y.size}")
        return self._csc.T @ y

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseSystemMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2:
            raise ValidationError("dense system matrix must be 2-D")
        rows, cols = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], rows, cols, dense[rows, cols])

    @classmethod
    def from_scipy(cls, mat) -> "SparseSystemMatrix":
        coo = sp.coo_matrix(mat)
        return cls(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data)


@dataclass
class MeasurementSet:
    """Observed counts and known background means, one entry per detector element."""

    counts: np.ndarray
    background: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ValidationError("counts must be a 1-D vector")
        if not np.issubdtype(counts.dtype, np.integer):
            rounded = np.rint(np.asarray(counts, dtype=np.float64))
            if np.any(np.abs(counts - rounded) > 0):
                raise ValidationError("counts must be integers")
            counts = rounded
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValidationError("counts must be nonnegative")
        self.counts = counts
        background = np.asarray(self.background, dtype=np.float64).ravel()
        if background.shape != counts.shape:
            raise ValidationError(
                f"background length {background.size} does not match counts "
                f"length {counts.size}"
            )
        if np.any(background < 0):
            raise ValidationError("background must be nonnegative")
        self.background = background

    @property
    def n_measurements(self) -> int:
        return self.counts.size


REGULARIZER_NAMES = ("group_tv", "standard_tv")


@dataclass
class SolverConfig:
    """Settings for one penalized-likelihood solve.

    ``lam`` is the ADMM penalty parameter; when ``None`` it defaults to
    ``beta`` (prox threshold beta/lam = 1), or to 1.0 when ``beta`` is 0.
    """

    beta: float = 0.1
    lam: float | None = None
    outer_iters: int = 200
    inner_iters: int = 1
    regularizer: str = "group_tv"
    tol_rel_primal: float = 1e-6
    tol_rel_obj: float = 1e-9
    seed: int = 0
    deterministic_reductions: bool = True

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValidationError(f"beta must be >= 0, got {self.beta}")
        if self.lam is None:
            self.lam = self.beta if self.beta > 0 else 1.0
        if not self.lam > 0:
            raise ValidationError(f"lambda must be > 0, got {self.lam}")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValidationError("iteration counts must be >= 1")
        if self.regularizer not in REGULARIZER_NAMES:
            raise ValidationError(
                f"regularizer must be one of {REGULARIZER_NAMES}, got "
                f"{self.regularizer!r}"
            )
        if not (self.tol_rel_primal > 0 and self.tol_rel_obj > 0):
            raise ValidationError("stopping tolerances must be positive")


@dataclass
class ProblemDiagnostics:
    """Result of :func:`validate_problem`.

    ``unobservable_voxels`` lists columns with zero sum (no measurement sees
    them); ``infeasible_rows`` lists measurements whose Poisson mean is
    provably zero (empty matrix row, zero background) despite a positive
    count.  Both are warnings here; the solver refuses to run with infeasible
    rows.
    """

    n_measurements: int
    n_voxels: int
    unobservable_voxels: list[int] = field(default_factory=list)
    infeasible_rows: list[int] = field(default_factory=list)

    @property
    def n_warnings(self) -> int:
        return len(self.unobservable_voxels) + len(self.infeasible_rows)


def validate_problem(
    matrix: SparseSystemMatrix,
    measurements: MeasurementSet,
    grid: ImageGrid,
) -> ProblemDiagnostics:
    """Check dimensional consistency and flag degenerate rows/columns.

    Raises:
        ValidationError: on any dimension mismatch.
    """
    if matrix.n_cols != grid.n_voxels:
        raise ValidationError(
            f"system matrix has {matrix.n_cols} columns, grid expects "
            f"{grid.n_voxels} voxels"
        )
    if matrix.n_rows != measurements.n_measurements:
        raise ValidationError(
            f"system matrix has {matrix.n_rows} rows, measurements have "
            f"{measurements.n_measurements} entries"
        )
    unobservable = np.flatnonzero(matrix.col_sums == 0)
    row_sums = np.zeros(matrix.n_rows)
    np.add.at(row_sums, matrix.rows, matrix.vals)
    infeasible = np.flatnonzero(
        (row_sums == 0) & (measurements.background == 0) & (measurements.counts > 0)
    )
    return ProblemDiagnostics(
        n_measurements=matrix.n_rows,
        n_voxels=matrix.n_cols,
        unobservable_voxels=unobservable.tolist(),
        infeasible_rows=infeasible.tolist(),
    )
