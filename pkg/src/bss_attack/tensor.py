"""Image tensors as ``(channels, height, width)`` numpy arrays.

Everything here is a pure function. Arrays with extra leading dimensions
(batches) are accepted wherever only the spatial axes matter, because the
axis helpers index from the end.
"""
from __future__ import annotations

import enum
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ArgumentError, RangeError, ShapeError

DTYPE = np.float32


class Axis(enum.Enum):
    HEIGHT = -2
    WIDTH = -1

    @property
    def other(self) -> "Axis":
        return Axis.WIDTH if self is Axis.HEIGHT else Axis.HEIGHT

    @classmethod
    def parse(cls, value) -> "Axis":
        if isinstance(value, Axis):
            return value
        key = str(value).strip().lower()
        if key in ("h", "height", "rows"):
            return cls.HEIGHT
        if key in ("w", "width", "cols"):
            return cls.WIDTH
        raise ArgumentError(f"unknown axis {value!r}")


def as_image(data, dtype=DTYPE) -> np.ndarray:
    """Validate and convert ``data`` to a C x H x W array."""
    img = np.asarray(data, dtype=dtype)
    if img.ndim != 3:
        raise ShapeError(f"expected a channels x height x width image, got shape {img.shape}")
    if min(img.shape) < 1:
        raise ShapeError(f"image extents must be positive, got {img.shape}")
    return img


def extent(img: np.ndarray, axis: Axis) -> int:
    return img.shape[axis.value]


def slice_axis(img: np.ndarray, start: int, end: int, axis: Axis) -> np.ndarray:
    n = extent(img, axis)
    if not (0 <= start < end <= n):
        raise RangeError(f"slice [{start}, {end}) invalid for extent {n} along {axis.name.lower()}")
    index = [slice(None)] * img.ndim
    index[axis.value] = slice(start, end)
    return img[tuple(index)].copy()


def concat_axis(blocks: Sequence[np.ndarray], axis: Axis) -> np.ndarray:
    if len(blocks) == 0:
        raise ArgumentError("concat_axis needs at least one block")
    first = blocks[0]
    for b in blocks[1:]:
        if b.ndim != first.ndim:
            raise ShapeError("blocks differ in rank")
        for d in range(first.ndim):
            if d - first.ndim != axis.value and b.shape[d] != first.shape[d]:
                raise ShapeError(
                    f"off-axis extents disagree: {first.shape} vs {b.shape} "
                    f"(concatenating along {axis.name.lower()})"
                )
    return np.concatenate(blocks, axis=axis.value)


@lru_cache(maxsize=4096)
def _interp_matrix(src_len: int, new_len: int) -> np.ndarray:
    # half-pixel centres, source coordinate clamped to [0, src_len - 1]
    i = np.arange(new_len, dtype=np.float64)
    coord = (i + 0.5) * (src_len / new_len) - 0.5
    coord = np.clip(coord, 0.0, src_len - 1)
    lo = np.floor(coord).astype(np.int64)
    hi = np.minimum(lo + 1, src_len - 1)
    frac = coord - lo
    mat = np.zeros((new_len, src_len), dtype=np.float64)
    rows = np.arange(new_len)
    np.add.at(mat, (rows, lo), 1.0 - frac)
    np.add.at(mat, (rows, hi), frac)
    mat.setflags(write=False)
    return mat


def interp_matrix(src_len: int, new_len: int, dtype=np.float64) -> np.ndarray:
    """Row-stochastic ``new_len x src_len`` matrix of 1-D linear interpolation.

    ``interp_matrix(n, m) @ v`` resizes the vector ``v`` of length ``n`` to
    length ``m``; its transpose is the exact backward pass of that resize.
    """
    if new_len < 1:
        raise ArgumentError(f"new length must be >= 1, got {new_len}")
    if src_len < 1:
        raise ArgumentError(f"source length must be >= 1, got {src_len}")
    mat = _interp_matrix(int(src_len), int(new_len))
    return mat if dtype == np.float64 else mat.astype(dtype)


def apply_axis_matrix(img: np.ndarray, mat: np.ndarray, axis: Axis) -> np.ndarray:
    """Apply ``mat`` (out_len x in_len) along ``axis`` of ``img``."""
    if axis is Axis.WIDTH:
        return img @ mat.T.astype(img.dtype, copy=False)
    return np.swapaxes(np.swapaxes(img, -1, -2) @ mat.T.astype(img.dtype, copy=False), -1, -2)


def resize_axis_bilinear(img: np.ndarray, new_len: int, axis: Axis) -> np.ndarray:
    src_len = extent(img, axis)
    mat = interp_matrix(src_len, new_len)
    if new_len == src_len:
        # identity mapping; skip the matmul so the copy is exact
        return np.array(img, copy=True)
    return np.ascontiguousarray(apply_axis_matrix(img, mat, axis))


def clamp01(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)
