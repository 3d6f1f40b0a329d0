"""Estimator front end: sklearn parameter contract and solver parity."""

import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.base import clone

from scatter_recon import CoherentScatterReconstructor, SolverConfig, solve
from scatter_recon.estimator import as_system_matrix
from scatter_recon.exceptions import ValidationError
from scatter_recon.grid import SparseSystemMatrix
from scatter_recon.likelihood import forward_project, neg_log_likelihood

from conftest import small_instance

rtol = 1e-12


def _fitted(seed=0, **params):
    grid, matrix, measurements, f_true = small_instance(seed=seed)
    est = CoherentScatterReconstructor(grid=grid, outer_iters=20, **params)
    est.fit(matrix, measurements.counts, background=measurements.background)
    return est, (grid, matrix, measurements, f_true)


def test_get_params_round_trip():
    est = CoherentScatterReconstructor(beta=0.3, regularizer="standard_tv")
    params = est.get_params()
    assert params["beta"] == 0.3
    assert params["regularizer"] == "standard_tv"
    est2 = CoherentScatterReconstructor(**params)
    assert est2.get_params() == params


def test_set_params_and_clone():
    est = CoherentScatterReconstructor(beta=0.3)
    est.set_params(beta=0.7, outer_iters=5)
    assert est.beta == 0.7
    assert est.outer_iters == 5
    est2 = clone(est)
    assert est2.get_params() == est.get_params()


def test_fit_requires_grid():
    est = CoherentScatterReconstructor()
    with pytest.raises(ValidationError):
        est.fit(np.eye(4), np.ones(4))


def test_fit_sets_attributes():
    est, (grid, matrix, measurements, _) = _fitted()
    assert est.image_.grid == grid
    assert est.coef_.shape == (grid.n_voxels,)
    assert est.coef_.min() >= 0
    assert est.n_iter_ == len(est.traces_)
    assert est.objective_ == est.traces_[-1].objective
    assert isinstance(est.converged_, bool)


def test_fit_matches_functional_solver_exactly():
    est, (grid, matrix, measurements, _) = _fitted(beta=0.2, regularizer="standard_tv")
    config = SolverConfig(beta=0.2, outer_iters=20, regularizer="standard_tv")
    result = solve(matrix, measurements, grid, config)
    np.testing.assert_array_equal(est.image_.values, result.image.values)
    assert est.objective_ == result.traces[-1].objective
    assert est.converged_ == result.converged


def test_predict_is_forward_model():
    est, (grid, matrix, measurements, _) = _fitted()
    predicted = est.predict(matrix)
    expected = forward_project(matrix, est.coef_, measurements.background)
    np.testing.assert_allclose(predicted, expected, rtol=rtol)


def test_predict_before_fit_rejected():
    est = CoherentScatterReconstructor()
    with pytest.raises(ValidationError):
        est.predict(np.eye(2))


def test_score_is_negative_nll():
    est, (grid, matrix, measurements, _) = _fitted()
    expected = -neg_log_likelihood(measurements.counts, est.predict(matrix))
    assert abs(est.score(matrix, measurements.counts) - expected) <= rtol * abs(expected)


def test_accepts_scipy_sparse_and_dense():
    grid, matrix, measurements, _ = small_instance()
    dense = matrix.to_dense()
    as_csr = sp.csr_matrix(dense)
    est_native = CoherentScatterReconstructor(grid=grid, outer_iters=10)
    est_scipy = CoherentScatterReconstructor(grid=grid, outer_iters=10)
    est_dense = CoherentScatterReconstructor(grid=grid, outer_iters=10)
    est_native.fit(matrix, measurements.counts, background=measurements.background)
    est_scipy.fit(as_csr, measurements.counts, background=measurements.background)
    est_dense.fit(dense, measurements.counts, background=measurements.background)
    np.testing.assert_array_equal(est_native.coef_, est_scipy.coef_)
    np.testing.assert_array_equal(est_native.coef_, est_dense.coef_)


def test_as_system_matrix_passthrough_and_rejection():
    grid, matrix, _, _ = small_instance()
    assert as_system_matrix(matrix) is matrix
    back = as_system_matrix(sp.coo_matrix(matrix.to_dense()))
    assert isinstance(back, SparseSystemMatrix)
    with pytest.raises(ValidationError):
        as_system_matrix(np.zeros(3))


def test_refit_overwrites_state():
    est, (grid, matrix, measurements, _) = _fitted()
    first = est.coef_.copy()
    est.set_params(beta=5.0)
    est.fit(matrix, measurements.counts, background=measurements.background)
    assert not np.array_equal(est.coef_, first)
