"""Image summary and accuracy metric tests against hand-computed values."""

import math

import numpy as np
import pytest

from scatter_recon import (
    cosine_similarity,
    display_transform,
    mtp_extract,
    spatial_distribution,
    spatial_rmse,
    spectral_rmse,
)
from scatter_recon.exceptions import ValidationError
from scatter_recon.grid import HyperImage, build_grid

rtol, atol = 1e-12, 1e-14


def test_spatial_distribution_known():
    image = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [4.0, 0.0, 0.5]])
    np.testing.assert_allclose(spatial_distribution(image), [6.0, 0.0, 4.5], rtol=rtol)


def test_spatial_distribution_accepts_hyperimage():
    grid = build_grid(2, 1, 3, 1.0, 1.0, 0.05, 0.45)
    image = HyperImage(grid, np.array([[1.0, 1.0, 1.0], [2.0, 0.0, 0.0]]))
    np.testing.assert_allclose(spatial_distribution(image), [3.0, 2.0], rtol=rtol)


def test_spatial_distribution_vs_loop():
    rng = np.random.default_rng(0)
    values = rng.random((12, 5))
    expected = [math.fsum(values[s]) for s in range(12)]
    np.testing.assert_allclose(spatial_distribution(values), expected, rtol=rtol)


def test_display_transform_known():
    np.testing.assert_allclose(
        display_transform(np.array([0.0, 4.0, 1.0])), [0.0, 1.0, 0.5], rtol=rtol
    )


def test_display_transform_constant():
    np.testing.assert_allclose(display_transform(np.full(6, 3.7)), np.ones(6), rtol=rtol)


def test_display_transform_order_preserving():
    rng = np.random.default_rng(1)
    dist = rng.random(40)
    out = display_transform(dist)
    assert (np.argsort(out) == np.argsort(dist)).all()
    assert out.max() == 1.0


def test_display_transform_all_zero_rejected():
    with pytest.raises(ValidationError):
        display_transform(np.zeros(5))


def test_mtp_extract_known():
    image = np.zeros((4, 3))
    image[2] = [3.0, 0.0, 4.0]
    image[0] = [0.5, 0.5, 0.5]
    s_star, profile = mtp_extract(image)
    assert s_star == 2
    np.testing.assert_allclose(profile, [0.6, 0.0, 0.8], rtol=rtol)
    assert abs(np.linalg.norm(profile) - 1.0) <= rtol


def test_mtp_extract_tie_takes_smaller_index():
    image = np.zeros((4, 2))
    image[1] = [1.0, 1.0]
    image[3] = [2.0, 0.0]
    s_star, _ = mtp_extract(image)
    assert s_star == 1


def test_mtp_extract_all_zero_rejected():
    with pytest.raises(ValidationError):
        mtp_extract(np.zeros((3, 3)))


def test_spatial_rmse_vs_loop():
    rng = np.random.default_rng(2)
    a = rng.random((10, 4))
    b = rng.random((10, 4))
    diffs = [math.fsum(a[s]) - math.fsum(b[s]) for s in range(10)]
    expected = math.sqrt(math.fsum(d * d for d in diffs) / 10)
    assert abs(spatial_rmse(a, b) - expected) <= rtol * expected


def test_spatial_rmse_identical_is_zero():
    rng = np.random.default_rng(3)
    a = rng.random((7, 3))
    assert spatial_rmse(a, a) == 0.0


def test_spatial_rmse_shape_mismatch():
    with pytest.raises(ValidationError):
        spatial_rmse(np.zeros((3, 2)), np.zeros((4, 2)))


def test_spectral_rmse_vs_loop():
    rng = np.random.default_rng(4)
    truth = np.zeros((8, 5))
    truth[[1, 4, 6]] = rng.random((3, 5)) + 0.1
    recon = rng.random((8, 5))
    sq = 0.0
    for s in (1, 4, 6):
        t = truth[s] / np.linalg.norm(truth[s])
        r = recon[s] / np.linalg.norm(recon[s])
        sq += math.fsum((r - t) ** 2)
    expected = math.sqrt(sq / (3 * 5))
    assert abs(spectral_rmse(recon, truth) - expected) <= rtol * expected


def test_spectral_rmse_ignores_off_support_bins():
    rng = np.random.default_rng(5)
    truth = np.zeros((6, 4))
    truth[2] = [1.0, 2.0, 0.5, 0.0]
    recon = truth.copy()
    recon[0] = rng.random(4)
    recon[5] = rng.random(4)
    assert spectral_rmse(recon, truth) == 0.0


def test_spectral_rmse_scale_invariant():
    rng = np.random.default_rng(6)
    truth = rng.random((5, 4)) + 0.1
    recon = rng.random((5, 4)) + 0.1
    base = spectral_rmse(recon, truth)
    scaled = spectral_rmse(3.0 * recon, 0.5 * truth)
    assert abs(scaled - base) <= rtol * base


def test_spectral_rmse_zero_recon_row_counts_fully():
    truth = np.zeros((3, 4))
    truth[1] = [0.0, 1.0, 0.0, 0.0]
    recon = np.zeros((3, 4))
    expected = math.sqrt(1.0 / 4)
    assert abs(spectral_rmse(recon, truth) - expected) <= rtol


def test_spectral_rmse_empty_support_rejected():
    with pytest.raises(ValidationError):
        spectral_rmse(np.ones((3, 2)), np.zeros((3, 2)))


def test_cosine_similarity_known():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert abs(cosine_similarity(np.array([1.0, 1.0]), np.array([2.0, 2.0])) - 1.0) <= rtol
    a = np.array([3.0, 4.0])
    b = np.array([4.0, 3.0])
    assert abs(cosine_similarity(a, b) - 24.0 / 25.0) <= rtol


def test_cosine_similarity_zero_vector():
    assert cosine_similarity(np.zeros(3), np.ones(3)) == 0.0
