import numpy as np
import pytest
from scipy import ndimage

from nhaze.superpixels import segment_superpixels


def _check_partition(seg, labels):
    n = seg.max() + 1
    assert set(np.unique(seg)) == set(range(n))
    for k in range(n):
        mask = seg == k
        assert np.unique(labels[mask]).size == 1
        _, comps = ndimage.label(mask, structure=[[0, 1, 0], [1, 1, 1], [0, 1, 0]])
        assert comps == 1


def test_uniform_map_grid():
    labels = np.zeros((200, 200), int)
    seg = segment_superpixels(labels, 100)
    n = seg.max() + 1
    assert 90 <= n <= 110
    sizes = np.bincount(seg.ravel())
    assert abs(np.median(sizes) - 400) <= 40
    _check_partition(seg, labels)


def test_tiny_map_single_superpixel():
    assert segment_superpixels(np.zeros((3, 3), int), 100).max() == 0


def test_two_class_split():
    labels = np.zeros((40, 60), int)
    labels[:, 30:] = 5
    seg = segment_superpixels(labels, 2)
    assert seg.max() == 1
    np.testing.assert_array_equal(seg[:, :30] == seg[0, 0], True)
    np.testing.assert_array_equal(seg[:, 30:] == seg[0, 59], True)


def test_irregular_classes_never_straddle():
    rng = np.random.default_rng(0)
    labels = ndimage.zoom(rng.integers(0, 4, (8, 10)), 12, order=0)
    labels[40:45, :] = 9  # thin strip
    seg = segment_superpixels(labels, 60)
    _check_partition(seg, labels)


def test_errors():
    with pytest.raises(ValueError):
        segment_superpixels(np.zeros((0, 4), int), 3)
    with pytest.raises(ValueError):
        segment_superpixels(np.zeros((4, 4), int), 0)
