"""Estimator-style front end over the penalized-likelihood solver.

Wraps the functional solver in the familiar fit/predict shape: construct
with hyperparameters, ``fit`` on a forward operator and observed counts,
then read the reconstruction off fitted attributes.  Hyperparameters follow
the scikit-learn contract (stored as given, validated at fit time), so
``get_params`` / ``set_params`` / ``clone`` work for grid searches.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .diffops import DEFAULT_STENCIL
from .exceptions import ValidationError
from .grid import ImageGrid, MeasurementSet, SolverConfig, SparseSystemMatrix
from .likelihood import forward_project, neg_log_likelihood
from .solver import solve

__all__ = ["CoherentScatterReconstructor", "as_system_matrix"]


def as_system_matrix(X) -> SparseSystemMatrix:
    """Accept a system matrix in any common container.

    Passes through :class:`SparseSystemMatrix`, converts scipy sparse
    matrices and dense arrays.
    """
    if isinstance(X, SparseSystemMatrix):
        return X
    if sp.issparse(X):
        return SparseSystemMatrix.from_scipy(X)
    arr = np.asarray(X)
    if arr.ndim == 2:
        return SparseSystemMatrix.from_dense(arr)
    raise ValidationError(f"cannot interpret {type(X).__name__} as a system matrix")


class CoherentScatterReconstructor(BaseEstimator):
    """Reconstruct a hyperspectral image from multiplexed Poisson counts.

    Parameters mirror the solver configuration; ``grid`` fixes the image
    geometry and must match the operator's column count at fit time.

    Attributes (after fit):
        image_: the reconstructed HyperImage.
        coef_: flat nonnegative voxel vector, length J.
        traces_: per-iteration solver diagnostics.
        objective_: final penalized objective value.
        converged_: whether the stopping tolerances were met.
        n_iter_: completed outer iterations.
    """

    def __init__(
        self,
        grid: ImageGrid | None = None,
        beta: float = 0.1,
        lam: float | None = None,
        outer_iters: int = 200,
        inner_iters: int = 1,
        regularizer: str = "group_tv",
        tol_rel_primal: float = 1e-6,
        tol_rel_obj: float = 1e-9,
        seed: int = 0,
        deterministic_reductions: bool = True,
        stencil=DEFAULT_STENCIL,
        weights=None,
    ):
        self.grid = grid
        self.beta = beta
        self.lam = lam
        self.outer_iters = outer_iters
        self.inner_iters = inner_iters
        self.regularizer = regularizer
        self.tol_rel_primal = tol_rel_primal
        self.tol_rel_obj = tol_rel_obj
        self.seed = seed
        self.deterministic_reductions = deterministic_reductions
        self.stencil = stencil
        self.weights = weights

    def _config(self) -> SolverConfig:
        return SolverConfig(
            beta=self.beta,
            lam=self.lam,
            outer_iters=self.outer_iters,
            inner_iters=self.inner_iters,
            regularizer=self.regularizer,
            tol_rel_primal=self.tol_rel_primal,
            tol_rel_obj=self.tol_rel_obj,
            seed=self.seed,
            deterministic_reductions=self.deterministic_reductions,
        )

    def fit(self, X, y, background=None):
        """Reconstruct from operator ``X`` and counts ``y``.

        Args:
            X: system matrix (SparseSystemMatrix, scipy sparse, or dense),
                shape I x J.
            y: nonnegative integer counts, length I.
            background: known background means, length I (default zero).

        Returns:
            self.
        """
        if self.grid is None:
            raise ValidationError("grid must be set before fitting")
        matrix = as_system_matrix(X)
        y = np.asarray(y)
        if background is None:
            background = np.zeros(matrix.n_rows)
        measurements = MeasurementSet(y, np.asarray(background, dtype=np.float64))
        result = solve(
            matrix,
            measurements,
            self.grid,
            self._config(),
            stencil=self.stencil,
            weights=self.weights,
        )
        self.image_ = result.image
        self.coef_ = result.image.flat.copy()
        self.traces_ = result.traces
        self.converged_ = result.converged
        self.n_iter_ = result.n_iters
        self.objective_ = result.traces[-1].objective if result.traces else np.nan
        self.background_ = measurements.background.copy()
        return self

    def predict(self, X):
        """Expected counts ``X @ f + r`` under the fitted image."""
        if not hasattr(self, "coef_"):
            raise ValidationError("estimator is not fitted")
        matrix = as_system_matrix(X)
        background = (
            self.background_
            if matrix.n_rows == self.background_.size
            else np.zeros(matrix.n_rows)
        )
        return forward_project(matrix, self.coef_, background)

    def score(self, X, y):
        """Negative Poisson deviance-style score: higher is better."""
        means = self.predict(X)
        return -neg_log_likelihood(np.asarray(y), means)
