import numpy as np
import pytest

from msqale.levels import LEVEL_IMAGE, LEVEL_LOWPASS, level_bands, level_list, level_name


def test_level_list():
    assert level_list(0) == [0]
    assert level_list(1) == [0, 1, -1]
    assert level_list(3) == [0, 1, 2, 3, -1]
    with pytest.raises(ValueError):
        level_list(-1)


def test_level_name():
    assert level_name(LEVEL_IMAGE) == "image"
    assert level_name(LEVEL_LOWPASS) == "low"
    assert level_name(2) == "hp2"
    with pytest.raises(ValueError):
        level_name(-3)


def test_level_bands_shapes(rng):
    img = rng.random((64, 48, 3))
    bands = level_bands(img, 2)
    assert set(bands) == {0, 1, 2, -1}
    assert bands[0].shape == (64, 48, 3)
    assert bands[1].shape == (64, 48, 3)
    assert bands[2].shape == (32, 24, 3)
    assert bands[-1].shape == (16, 12, 3)


def test_level_bands_image_keeps_color(rng):
    img = rng.random((16, 16, 3))
    bands = level_bands(img, 1)
    assert np.array_equal(bands[0], img)


def test_level_bands_values_in_unit_range(rng):
    img = rng.random((32, 32, 3))
    bands = level_bands(img, 2)
    for level, band in bands.items():
        assert band.min() >= 0.0 and band.max() <= 1.0, level_name(level)


def test_level_bands_subbands_replicated(rng):
    img = rng.random((32, 32, 3))
    bands = level_bands(img, 1)
    for level in (1, -1):
        b = bands[level]
        assert np.array_equal(b[:, :, 0], b[:, :, 1])
        assert np.array_equal(b[:, :, 0], b[:, :, 2])


def test_level_bands_zero_depth(rng):
    img = rng.random((8, 8, 3))
    assert list(level_bands(img, 0)) == [0]


def test_highpass_shift_centers_on_half():
    img = np.full((16, 16, 3), 0.5)
    bands = level_bands(img, 1)
    # constant image: highpass is 0 everywhere, shifted to 0.5
    assert np.allclose(bands[1], 0.5, atol=1e-9)
