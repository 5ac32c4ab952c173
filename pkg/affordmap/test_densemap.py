# type: ignore

import numpy as np
from pytest import raises
from hypothesis import given, settings
import hypothesis.strategies as st
import hypothesis.extra.numpy as hnp

from affordmap.basic import DegenerateMapError, ValidationError
from affordmap.densemap import (
    DenseMap, minmax_normalize, normalize_to_distribution, resize_bilinear, uniform_map,
)


def grids(min_side=1, max_side=8):
    shapes = hnp.array_shapes(min_dims=2, max_dims=2, min_side=min_side, max_side=max_side)
    return hnp.arrays(np.float64, shapes, elements=st.floats(0, 1e3, allow_nan=False))


def test_invariants():
    with raises(ValidationError):
        DenseMap(np.array([[-1.0]]))
    with raises(ValidationError):
        DenseMap(np.array([[np.nan]]))
    with raises(ValidationError):
        DenseMap(np.array([1.0, 2.0]))
    with raises(ValidationError):
        DenseMap(np.zeros((0, 3)))


def test_values_read_only():
    source = np.ones((2, 2))
    dmap = DenseMap(source)
    source[0, 0] = 5
    assert dmap.values[0, 0] == 1
    with raises(ValueError):
        dmap.values[0, 0] = 2


def test_normalize_examples():
    out = normalize_to_distribution(DenseMap.from_array([[2, 2], [0, 0]]))
    np.testing.assert_allclose(out.values, [[0.5, 0.5], [0, 0]])
    assert normalize_to_distribution(DenseMap.from_array([[1]])).values[0, 0] == 1.0
    np.testing.assert_allclose(
        normalize_to_distribution(DenseMap.from_array([[0.3, 0.7]])).values, [[0.3, 0.7]]
    )
    with raises(DegenerateMapError):
        normalize_to_distribution(DenseMap(np.zeros((3, 3))))


def test_minmax_examples():
    np.testing.assert_allclose(minmax_normalize(DenseMap.from_array([[0, 5, 10]])).values, [[0, 0.5, 1]])
    np.testing.assert_array_equal(minmax_normalize(DenseMap.from_array([[3, 3]])).values, [[0, 0]])


def test_resize_examples():
    dmap = DenseMap.from_array([[1, 2], [3, 4]])
    assert resize_bilinear(dmap, 2, 2) == dmap
    np.testing.assert_allclose(resize_bilinear(DenseMap.from_array([[0, 1]]), 1, 3).values, [[0, 0.5, 1]])
    const = DenseMap(np.full((3, 5), 0.37))
    np.testing.assert_array_equal(resize_bilinear(const, 7, 2).values, np.full((7, 2), 0.37))
    with raises(ValidationError):
        resize_bilinear(dmap, 0, 2)


def test_resize_corners_align():
    dmap = DenseMap(np.arange(12, dtype=float).reshape(3, 4))
    out = resize_bilinear(dmap, 5, 7).values
    assert out[0, 0] == 0 and out[-1, -1] == 11
    assert out[0, -1] == 3 and out[-1, 0] == 8


def test_uniform_map():
    dmap = uniform_map(4, 5)
    assert dmap.shape == (4, 5)
    assert abs(dmap.total - 1) < 1e-12


@settings(deadline=None, max_examples=200)
@given(grids())
def test_normalize_idempotent(values):
    dmap = DenseMap(values)
    if not dmap.total > 0:
        return
    once = normalize_to_distribution(dmap)
    twice = normalize_to_distribution(once)
    assert abs(once.total - 1) < 1e-9
    np.testing.assert_allclose(once.values, twice.values, atol=1e-12, rtol=0)


@settings(deadline=None, max_examples=200)
@given(grids(), st.integers(1, 12), st.integers(1, 12))
def test_resize_nonnegative(values, h, w):
    out = resize_bilinear(DenseMap(values), h, w)
    assert out.shape == (h, w)
    assert (out.values >= 0).all()
    assert out.values.max() <= values.max() + 1e-9


@settings(deadline=None, max_examples=200)
@given(grids())
def test_minmax_range(values):
    out = minmax_normalize(DenseMap(values)).values
    assert out.min() >= 0 and out.max() <= 1
