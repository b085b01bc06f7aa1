import numpy as np
import pytest

from msqale.filters import (
    WINDOW7,
    box_downsample2,
    gaussian_blur,
    gaussian_kernel1d,
    local_mean_std,
    sepconv2d,
)
from oracles import conv2d_mirror, local_moments_mirror


def test_gaussian_kernel_normalized_and_symmetric():
    k = gaussian_kernel1d(1.5, 4)
    assert len(k) == 9
    assert abs(k.sum() - 1.0) < 1e-12
    assert np.allclose(k, k[::-1])
    assert np.argmax(k) == 4


def test_window7_shape():
    assert len(WINDOW7) == 7
    assert abs(WINDOW7.sum() - 1.0) < 1e-12


def test_sepconv_matches_direct_2d(rng):
    img = rng.random((11, 9))
    k = gaussian_kernel1d(1.0, 2)
    assert np.allclose(sepconv2d(img, k), conv2d_mirror(img, np.outer(k, k)), atol=1e-12)


def test_sepconv_rgb_channels_independent(rng):
    img = rng.random((8, 8, 3))
    k = gaussian_kernel1d(1.0, 2)
    out = sepconv2d(img, k)
    for c in range(3):
        assert np.allclose(out[:, :, c], sepconv2d(img[:, :, c], k), atol=1e-12)


def test_local_mean_std_against_naive(rng):
    img = rng.random((10, 10))
    mu, sigma = local_mean_std(img)
    mu_o, sigma_o = local_moments_mirror(img, WINDOW7)
    assert np.allclose(mu, mu_o, atol=1e-10)
    assert np.allclose(sigma, sigma_o, atol=1e-10)


def test_local_std_constant_is_zero():
    _, sigma = local_mean_std(np.full((9, 9), 0.5))
    assert np.max(sigma) < 1e-7


def test_gaussian_blur_identity_at_zero_sigma(rng):
    img = rng.random((8, 8, 3))
    out = gaussian_blur(img, 0.0)
    assert np.array_equal(out, img)
    assert out is not img


def test_gaussian_blur_preserves_mean_of_constant():
    img = np.full((16, 16), 0.3)
    assert np.allclose(gaussian_blur(img, 2.0), 0.3, atol=1e-12)


def test_gaussian_blur_reduces_variance(rng):
    img = rng.random((32, 32))
    assert gaussian_blur(img, 1.5).var() < img.var()


def test_box_downsample_exact_average():
    img = np.array([[1.0, 3.0], [5.0, 7.0]])
    assert np.allclose(box_downsample2(img), [[4.0]])


def test_box_downsample_crops_odd_edge(rng):
    img = rng.random((5, 7))
    out = box_downsample2(img)
    assert out.shape == (2, 3)
    assert abs(out[0, 0] - img[:2, :2].mean()) < 1e-12
