"""Comparison transforms sharing the BSS warp interface.

These are compact stand-ins for scale-invariance (SIM), resize-and-pad
(DIM) and block shuffle/rotate (BSR) style transforms, sized so that every
method produces exactly ``N`` images per step.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .tensor import interp_matrix
from .warps import SeparableWarp, SparseWarp


def scale_warp(index: int) -> SeparableWarp:
    return SeparableWarp(scale=1.0 / 2 ** index)


def resize_pad_matrix(L: int, new_len: int, offset: int) -> np.ndarray:
    """Resize an axis to ``new_len`` and zero-pad it back to ``L`` starting at ``offset``."""
    pad = np.zeros((L, new_len))
    pad[offset + np.arange(new_len), np.arange(new_len)] = 1.0
    return pad @ interp_matrix(L, new_len)


def sample_resize_pad(height: int, width: int, rng: np.random.Generator, min_scale: float = 0.85,
                      dtype=np.float32) -> SeparableWarp:
    if not 0 < min_scale <= 1:
        raise ConfigError(f"min_scale must lie in (0, 1], got {min_scale}")
    s = rng.uniform(min_scale, 1.0)
    mats = []
    for L in (height, width):
        new_len = max(1, int(round(s * L)))
        offset = int(rng.integers(0, L - new_len + 1))
        mats.append(resize_pad_matrix(L, new_len, offset).astype(dtype))
    return SeparableWarp(height=mats[0], width=mats[1])


def _edges(L: int, n: int) -> np.ndarray:
    return np.linspace(0, L, n + 1).round().astype(np.int64)


def sample_shuffle_rotate(height: int, width: int, rng: np.random.Generator, blocks: int = 2,
                          max_angle: float = 24.0, dtype=np.float32) -> SparseWarp:
    """Permute the grid's row and column strips, then rotate every block about its centre.

    Rotation samples bilinearly inside the source block and fills with zeros
    outside it.
    """
    if blocks < 1 or blocks > min(height, width):
        raise ConfigError(f"cannot cut a {height}x{width} image into {blocks}x{blocks} blocks")
    row_edges, col_edges = _edges(height, blocks), _edges(width, blocks)
    row_perm, col_perm = rng.permutation(blocks), rng.permutation(blocks)
    angles = np.deg2rad(rng.uniform(-max_angle, max_angle, size=(blocks, blocks)))

    row_sizes = np.diff(row_edges)[row_perm]
    col_sizes = np.diff(col_edges)[col_perm]
    out_rows = np.concatenate([[0], np.cumsum(row_sizes)])
    out_cols = np.concatenate([[0], np.cumsum(col_sizes)])

    rows_i, cols_j, vals = [], [], []
    for bi in range(blocks):
        src_r = row_perm[bi]
        h_b, top_src = row_sizes[bi], row_edges[src_r]
        for bj in range(blocks):
            src_c = col_perm[bj]
            w_b, left_src = col_sizes[bj], col_edges[src_c]
            ii, jj = np.mgrid[0:h_b, 0:w_b]
            u = ii + 0.5 - h_b / 2
            v = jj + 0.5 - w_b / 2
            c, s = np.cos(angles[bi, bj]), np.sin(angles[bi, bj])
            su = c * u + s * v + h_b / 2 - 0.5
            sv = -s * u + c * v + w_b / 2 - 0.5
            u0, v0 = np.floor(su).astype(np.int64), np.floor(sv).astype(np.int64)
            fu, fv = su - u0, sv - v0
            out_index = (out_rows[bi] + ii) * width + (out_cols[bj] + jj)
            for du, dv, wgt in ((0, 0, (1 - fu) * (1 - fv)), (0, 1, (1 - fu) * fv),
                                (1, 0, fu * (1 - fv)), (1, 1, fu * fv)):
                uu, vv = u0 + du, v0 + dv
                ok = (uu >= 0) & (uu < h_b) & (vv >= 0) & (vv < w_b) & (wgt > 0)
                rows_i.append(out_index[ok])
                cols_j.append((top_src + uu[ok]) * width + (left_src + vv[ok]))
                vals.append(wgt[ok])
    n = height * width
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows_i), np.concatenate(cols_j))),
                        shape=(n, n), dtype=dtype)
    return SparseWarp(mat, (height, width))
