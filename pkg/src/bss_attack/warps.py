"""Linear spatial warps with exact adjoints.

Every transform in the toolkit is linear in the image, so each sampled
transform is stored as an operator that can be applied to an image and
transposed to carry a gradient back to the untransformed input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .tensor import Axis, apply_axis_matrix


@dataclass(frozen=True)
class SeparableWarp:
    """``scale * A_h @ X @ A_w.T`` per channel; ``None`` means identity."""

    height: np.ndarray | None = None
    width: np.ndarray | None = None
    scale: float = 1.0

    def apply(self, img: np.ndarray) -> np.ndarray:
        out = img
        if self.height is not None:
            out = apply_axis_matrix(out, self.height, Axis.HEIGHT)
        if self.width is not None:
            out = apply_axis_matrix(out, self.width, Axis.WIDTH)
        if self.scale != 1.0:
            out = out * np.asarray(self.scale, dtype=img.dtype)
        return np.ascontiguousarray(out, dtype=img.dtype) if out is not img else img.copy()

    def adjoint(self, grad: np.ndarray) -> np.ndarray:
        out = grad
        if self.height is not None:
            out = apply_axis_matrix(out, self.height.T, Axis.HEIGHT)
        if self.width is not None:
            out = apply_axis_matrix(out, self.width.T, Axis.WIDTH)
        if self.scale != 1.0:
            out = out * np.asarray(self.scale, dtype=grad.dtype)
        return np.ascontiguousarray(out, dtype=grad.dtype) if out is not grad else grad.copy()


@dataclass(frozen=True)
class SparseWarp:
    """General linear map on the flattened ``H x W`` plane, shared by all channels."""

    matrix: sp.csr_matrix
    shape: tuple[int, int]

    def apply(self, img: np.ndarray) -> np.ndarray:
        h, w = self.shape
        flat = img.reshape(-1, h * w)
        out = (self.matrix @ flat.T).T
        return np.ascontiguousarray(out.reshape(img.shape), dtype=img.dtype)

    def adjoint(self, grad: np.ndarray) -> np.ndarray:
        h, w = self.shape
        flat = grad.reshape(-1, h * w)
        out = (self.matrix.T @ flat.T).T
        return np.ascontiguousarray(out.reshape(grad.shape), dtype=grad.dtype)


IDENTITY = SeparableWarp()
