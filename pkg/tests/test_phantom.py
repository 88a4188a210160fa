import numpy as np
import pytest

from anisosr import foreground_mask, make_phantom, make_phantoms


def test_phantom_range_and_background():
    v = make_phantom(32, np.random.default_rng(0))
    assert v.data.min() == 0.0
    assert v.data.max() == 1.0
    corner = v.data[:3, :3, :3]
    assert np.all(corner == 0.0)  # ellipsoid support leaves corners empty
    assert (v.data > 0).sum() > 0.2 * 32 ** 3


def test_phantom_mask_equals_support():
    v = make_phantom(32, np.random.default_rng(5))
    mask = foreground_mask(v, 0.0)
    support = v.data > 0
    assert (mask.data & support).sum() == support.sum()  # no support voxel lost


def test_phantom_deterministic():
    a = make_phantom(24, np.random.default_rng(9))
    b = make_phantom(24, np.random.default_rng(9))
    assert np.array_equal(a.data, b.data)


def test_phantoms_distinct_and_counted():
    vols = make_phantoms(3, 24, seed=1)
    assert len(vols) == 3
    assert not np.array_equal(vols[0].data, vols[1].data)
    again = make_phantoms(3, 24, seed=1)
    assert all(np.array_equal(a.data, b.data) for a, b in zip(vols, again))


def test_phantom_size_validation():
    with pytest.raises(ValueError, match="too small"):
        make_phantom(4, np.random.default_rng(0))
    with pytest.raises(ValueError, match="n >= 1"):
        make_phantoms(0, 24, seed=0)
