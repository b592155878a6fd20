import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bss_attack.errors import ArgumentError, RangeError, ShapeError
from bss_attack.tensor import Axis, clamp01, concat_axis, interp_matrix, resize_axis_bilinear, slice_axis


def ramp(c=1, h=4, w=4):
    return np.arange(c * h * w, dtype=np.float32).reshape(c, h, w)


def resize_oracle(vec, new_len):
    """Element-by-element evaluation of the half-pixel sampling rule."""
    n = len(vec)
    out = []
    for i in range(new_len):
        c = (i + 0.5) * (n / new_len) - 0.5
        c = min(max(c, 0.0), n - 1)
        lo = int(np.floor(c))
        hi = min(lo + 1, n - 1)
        f = c - lo
        out.append((1 - f) * vec[lo] + f * vec[hi])
    return np.array(out)


def test_full_slice_is_identity():
    img = ramp()
    np.testing.assert_array_equal(slice_axis(img, 0, 4, Axis.HEIGHT), img)


def test_slice_rows():
    img = ramp()
    out = slice_axis(img, 1, 3, Axis.HEIGHT)
    assert out.shape == (1, 2, 4)
    np.testing.assert_array_equal(out, img[:, 1:3])


def test_slice_cols_extent():
    img = np.zeros((3, 224, 224), dtype=np.float32)
    assert slice_axis(img, 35, 120, Axis.WIDTH).shape == (3, 224, 85)


@pytest.mark.parametrize("start,end", [(-1, 2), (2, 2), (3, 1), (0, 5)])
def test_slice_range_errors(start, end):
    with pytest.raises(RangeError):
        slice_axis(ramp(), start, end, Axis.HEIGHT)


def test_slice_concat_round_trip():
    img = ramp()
    parts = [slice_axis(img, 0, 2, Axis.HEIGHT), slice_axis(img, 2, 4, Axis.HEIGHT)]
    np.testing.assert_array_equal(concat_axis(parts, Axis.HEIGHT), img)


def test_concat_extent_addition():
    rows = [np.full((1, 1, 4), i, dtype=np.float32) for i in range(3)]
    assert concat_axis(rows, Axis.HEIGHT).shape == (1, 3, 4)
    blocks = [np.zeros((3, 224, 100)), np.zeros((3, 224, 124))]
    assert concat_axis(blocks, Axis.WIDTH).shape == (3, 224, 224)


def test_concat_errors():
    with pytest.raises(ArgumentError):
        concat_axis([], Axis.WIDTH)
    with pytest.raises(ShapeError):
        concat_axis([np.zeros((1, 4, 2)), np.zeros((1, 3, 2))], Axis.WIDTH)


def test_resize_identity():
    img = np.random.default_rng(0).random((3, 7, 9), dtype=np.float32)
    for axis in Axis:
        out = resize_axis_bilinear(img, img.shape[axis.value], axis)
        np.testing.assert_allclose(out, img, atol=1e-6)


def test_resize_ramp_hand_value():
    out = resize_axis_bilinear(np.arange(4, dtype=np.float32).reshape(1, 1, 4), 2, Axis.WIDTH)
    np.testing.assert_allclose(out.ravel(), [0.5, 2.5], atol=1e-7)


@pytest.mark.parametrize("new_len", [1, 2, 3, 5, 17, 40])
def test_resize_constant_exact(new_len):
    img = np.full((2, 6, 5), 0.3125, dtype=np.float32)
    out = resize_axis_bilinear(img, new_len, Axis.HEIGHT)
    assert out.shape == (2, new_len, 5)
    assert np.all(out == np.float32(0.3125))


def test_resize_zero_length():
    with pytest.raises(ArgumentError):
        resize_axis_bilinear(ramp(), 0, Axis.WIDTH)


@settings(max_examples=200, deadline=None)
@given(src=st.integers(1, 30), new=st.integers(1, 60), seed=st.integers(0, 2**32 - 1))
def test_resize_matches_oracle(src, new, seed):
    vec = np.random.default_rng(seed).random(src)
    img = vec.reshape(1, 1, src)
    out = resize_axis_bilinear(img, new, Axis.WIDTH).ravel()
    np.testing.assert_allclose(out, resize_oracle(vec, new), atol=1e-12)
    out_h = resize_axis_bilinear(img.reshape(1, src, 1), new, Axis.HEIGHT).ravel()
    np.testing.assert_allclose(out_h, out, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(img=arrays(np.float32, st.tuples(st.integers(1, 3), st.integers(1, 12), st.integers(1, 12)),
                  elements=st.floats(-2, 2, width=32)),
       new=st.integers(1, 30), axis=st.sampled_from(list(Axis)))
def test_resize_bounded(img, new, axis):
    out = resize_axis_bilinear(img, new, axis)
    assert out.min() >= img.min() - 1e-6
    assert out.max() <= img.max() + 1e-6


@pytest.mark.parametrize("n,m", [(8, 8), (8, 5), (5, 13)])
def test_resize_linear_ramp_interior(n, m):
    # a ramp is reproduced exactly wherever the sample coordinate is not clamped
    vec = np.arange(n, dtype=np.float64) * 0.1
    out = resize_axis_bilinear(vec.reshape(1, 1, n), m, Axis.WIDTH).ravel()
    coords = (np.arange(m) + 0.5) * n / m - 0.5
    inside = (coords >= 0) & (coords <= n - 1)
    np.testing.assert_allclose(out[inside], 0.1 * coords[inside], atol=1e-6)


def test_interp_matrix_rows_sum_to_one():
    for n, m in [(3, 7), (7, 3), (1, 4), (4, 1)]:
        np.testing.assert_allclose(interp_matrix(n, m).sum(axis=1), 1.0)


def test_clamp01():
    img = np.array([[[0.0, 1.2, -0.05, 0.5]]], dtype=np.float32)
    np.testing.assert_array_equal(clamp01(img), [[[0.0, 1.0, 0.0, 0.5]]])
    assert np.all(clamp01(np.zeros((1, 2, 2))) == 0)
