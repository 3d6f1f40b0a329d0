"""Poisson likelihood tests: projection, objective, gradient, EM surrogate."""

import numpy as np
import pytest

from scatter_recon.exceptions import InfeasibleMeanError, ValidationError
from scatter_recon.grid import SparseSystemMatrix
from scatter_recon.likelihood import (
    em_coeffs,
    forward_project,
    neg_log_likelihood,
    nll_gradient,
)
from scatter_recon.grid import MeasurementSet
from scatter_recon.oracle import fd_gradient

from conftest import random_sparse

REL_TOL = 1e-12
GRAD_FD_TOL = 1e-6
MAJORIZE_SLACK = 1e-10
TANGENT_TOL = 1e-8


def test_forward_project_zero_image():
    matrix = random_sparse(5, 4, 0.6, 0)
    r = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    np.testing.assert_array_equal(forward_project(matrix, np.zeros(4), r), r)


def test_forward_project_small_example():
    matrix = SparseSystemMatrix.from_dense(np.array([[1.0, 2.0], [0.0, 3.0]]))
    out = forward_project(matrix, np.array([1.0, 1.0]), np.array([0.5, 0.0]))
    np.testing.assert_allclose(out, [3.5, 3.0], rtol=REL_TOL)


def test_forward_project_matches_dense():
    for seed in range(30):
        rng = np.random.default_rng(seed)
        matrix = random_sparse(9, 7, 0.4, seed)
        f = rng.uniform(0.0, 5.0, size=7)
        r = rng.uniform(0.0, 2.0, size=9)
        want = matrix.to_dense() @ f + r
        np.testing.assert_allclose(
            forward_project(matrix, f, r), want, rtol=REL_TOL, atol=0
        )


def test_forward_project_dimension_mismatch():
    matrix = random_sparse(5, 4, 0.6, 0)
    with pytest.raises(ValidationError):
        forward_project(matrix, np.zeros(3), np.zeros(5))
    with pytest.raises(ValidationError):
        forward_project(matrix, np.zeros(4), np.zeros(4))


def test_nll_unit_case():
    assert neg_log_likelihood(np.array([1]), np.array([1.0])) == 1.0


def test_nll_zero_count_drops_log_term():
    assert neg_log_likelihood(np.array([0]), np.array([2.0])) == 2.0
    # A zero mean is fine when the count is zero.
    assert neg_log_likelihood(np.array([0]), np.array([0.0])) == 0.0


def test_nll_infeasible_mean():
    with pytest.raises(InfeasibleMeanError):
        neg_log_likelihood(np.array([1]), np.array([0.0]))


def test_nll_matches_high_precision_oracle():
    import math

    rng = np.random.default_rng(42)
    y = rng.poisson(5.0, size=200)
    means = rng.uniform(0.5, 20.0, size=200)
    # Term-by-term accumulation with math.fsum as the extended-precision oracle.
    terms = [m - yi * math.log(m) if yi > 0 else m for yi, m in zip(y, means)]
    want = math.fsum(terms)
    got = neg_log_likelihood(y, means)
    assert abs(got - want) <= REL_TOL * abs(want)


def test_nll_gradient_perfect_fit_is_zero():
    matrix = random_sparse(6, 4, 0.7, 1)
    y = np.array([3, 1, 4, 1, 5, 9])
    grad = nll_gradient(matrix, y, y.astype(float))
    np.testing.assert_allclose(grad, 0.0, atol=1e-13)


def test_nll_gradient_single_entry():
    matrix = SparseSystemMatrix.from_dense(np.array([[2.0]]))
    grad = nll_gradient(matrix, np.array([4]), np.array([2.0]))
    np.testing.assert_allclose(grad, [-2.0], rtol=REL_TOL)


def test_nll_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    matrix = random_sparse(8, 5, 0.5, 3)
    f = rng.uniform(0.5, 4.0, size=5)
    r = rng.uniform(0.1, 1.0, size=8)
    y = rng.poisson(forward_project(matrix, f, r))

    def fun(x):
        return neg_log_likelihood(y, forward_project(matrix, x, r))

    analytic = nll_gradient(matrix, y, forward_project(matrix, f, r))
    numeric = fd_gradient(fun, f, h=1e-5)
    np.testing.assert_allclose(analytic, numeric, rtol=GRAD_FD_TOL, atol=1e-8)


def test_em_coeffs_matches_naive():
    rng = np.random.default_rng(9)
    matrix = random_sparse(7, 5, 0.6, 9)
    dense = matrix.to_dense()
    f = rng.uniform(0.0, 3.0, size=5)
    f[2] = 0.0
    r = rng.uniform(0.1, 1.0, size=7)
    y = rng.poisson(dense @ f + r)
    coeffs = em_coeffs(matrix, MeasurementSet(y, r), f)
    means = dense @ f + r
    want_e = f * (dense.T @ (y / means))
    np.testing.assert_allclose(coeffs.e, want_e, rtol=REL_TOL, atol=0)
    np.testing.assert_allclose(coeffs.sigma, dense.sum(axis=0), rtol=REL_TOL)
    # Zero voxels produce zero back-projected counts.
    assert coeffs.e[2] == 0.0


def test_em_surrogate_majorizes_nll():
    """The separable surrogate lies above the likelihood everywhere sampled.

    Both sides are shifted so they agree at the expansion point; the check is
    surrogate(f) - nll(f) >= surrogate(f_n) - nll(f_n) - slack.
    """
    rng = np.random.default_rng(17)
    matrix = random_sparse(5, 8, 0.6, 17)
    f_n = rng.uniform(0.2, 3.0, size=8)
    r = rng.uniform(0.1, 1.0, size=5)
    y = rng.poisson(forward_project(matrix, f_n, r))
    coeffs = em_coeffs(matrix, MeasurementSet(y, r), f_n)

    def surrogate(f):
        terms = coeffs.sigma * f - np.where(
            coeffs.e > 0, coeffs.e * np.log(np.maximum(f, 1e-300)), 0.0
        )
        return float(terms.sum())

    def nll(f):
        return neg_log_likelihood(y, forward_project(matrix, f, r))

    gap_at_expansion = surrogate(f_n) - nll(f_n)
    worst = 0.0
    for _ in range(1000):
        f = rng.uniform(0.01, 6.0, size=8)
        gap = surrogate(f) - nll(f)
        worst = min(worst, gap - gap_at_expansion)
    assert worst >= -MAJORIZE_SLACK * abs(nll(f_n))


def test_em_surrogate_tangent_at_expansion():
    rng = np.random.default_rng(23)
    matrix = random_sparse(6, 5, 0.7, 23)
    f_n = rng.uniform(0.3, 2.0, size=5)
    r = rng.uniform(0.1, 0.5, size=6)
    y = rng.poisson(forward_project(matrix, f_n, r))
    coeffs = em_coeffs(matrix, MeasurementSet(y, r), f_n)
    surrogate_grad = coeffs.sigma - coeffs.e / f_n
    analytic = nll_gradient(matrix, y, forward_project(matrix, f_n, r))
    np.testing.assert_allclose(surrogate_grad, analytic, rtol=TANGENT_TOL, atol=1e-12)


def test_mlem_update_decreases_nll():
    rng = np.random.default_rng(31)
    matrix = random_sparse(10, 6, 0.5, 31)
    r = rng.uniform(0.1, 0.5, size=10)
    f_true = rng.uniform(0.5, 4.0, size=6)
    y = rng.poisson(forward_project(matrix, f_true, r))
    f = np.ones(6)
    prev = neg_log_likelihood(y, forward_project(matrix, f, r))
    for _ in range(25):
        coeffs = em_coeffs(matrix, MeasurementSet(y, r), f)
        f = coeffs.e / coeffs.sigma
        cur = neg_log_likelihood(y, forward_project(matrix, f, r))
        assert cur <= prev + 1e-12 * abs(prev)
        prev = cur


def test_em_coeffs_infeasible_mean():
    matrix = SparseSystemMatrix.from_dense(np.array([[1.0, 1.0], [0.0, 0.0]]))
    m = MeasurementSet(np.array([1, 1]), np.zeros(2))
    with pytest.raises(InfeasibleMeanError):
        em_coeffs(matrix, m, np.array([1.0, 1.0]))
