"""Datasets: procedurally rendered shapes and IDX (MNIST-style) files."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError
from .rng import substream
from .tensor import DTYPE

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SHAPE_CLASSES = (
    "hbar", "vbar", "diag_down", "diag_up", "square",
    "disk", "ring", "plus", "cross", "triangle",
)


@dataclass(frozen=True)
class LabeledImage:
    image: np.ndarray
    label: int


@dataclass
class Dataset:
    images: np.ndarray  # (n, C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (n,) int64
    num_classes: int

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> LabeledImage:
        return LabeledImage(self.images[i], int(self.labels[i]))

    def subset(self, index) -> "Dataset":
        return Dataset(self.images[index], self.labels[index], self.num_classes)

    def split(self, n_first: int) -> tuple["Dataset", "Dataset"]:
        return self.subset(slice(0, n_first)), self.subset(slice(n_first, None))


def _smooth(d, width):
    # 1 inside (d <= 0), 0 outside, linear ramp over ``width`` pixels
    return np.clip(0.5 - d / width, 0.0, 1.0)


def _shape_mask(kind: str, res: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:res, 0:res].astype(np.float64) + 0.5
    size = rng.uniform(0.28, 0.42) * res
    cx = rng.uniform(size * 0.8, res - size * 0.8)
    cy = rng.uniform(size * 0.8, res - size * 0.8)
    thick = rng.uniform(0.09, 0.14) * res
    u, v = xx - cx, yy - cy
    if kind == "hbar":
        d = np.maximum(np.abs(v) - thick / 2, np.abs(u) - size)
    elif kind == "vbar":
        d = np.maximum(np.abs(u) - thick / 2, np.abs(v) - size)
    elif kind in ("diag_down", "diag_up"):
        s = 1.0 if kind == "diag_down" else -1.0
        along = (u + s * v) / np.sqrt(2)
        across = (u - s * v) / np.sqrt(2)
        d = np.maximum(np.abs(across) - thick / 2, np.abs(along) - size)
    elif kind == "square":
        d = np.maximum(np.abs(u), np.abs(v)) - size * 0.7
    elif kind == "disk":
        d = np.hypot(u, v) - size * 0.8
    elif kind == "ring":
        d = np.abs(np.hypot(u, v) - size * 0.75) - thick / 2
    elif kind == "plus":
        bar_h = np.maximum(np.abs(v) - thick / 2, np.abs(u) - size)
        bar_v = np.maximum(np.abs(u) - thick / 2, np.abs(v) - size)
        d = np.minimum(bar_h, bar_v)
    elif kind == "cross":
        a = (u + v) / np.sqrt(2)
        b = (u - v) / np.sqrt(2)
        d = np.minimum(np.maximum(np.abs(a) - thick / 2, np.abs(b) - size),
                       np.maximum(np.abs(b) - thick / 2, np.abs(a) - size))
    elif kind == "triangle":
        # upward triangle: inside when below the two slanted edges and above the base
        r = size * 0.9
        d = np.maximum.reduce([
            v - r * 0.5,
            (-v * 0.5 + u * np.sqrt(3) / 2) - r * 0.5,
            (-v * 0.5 - u * np.sqrt(3) / 2) - r * 0.5,
        ])
    else:
        raise ArgumentError(f"unknown shape {kind!r}")
    return _smooth(d, 1.0)


def render_shape(label: int, res: int, channels: int, rng: np.random.Generator,
                 noise: float = 0.06) -> np.ndarray:
    mask = _shape_mask(SHAPE_CLASSES[label], res, rng)
    bg = rng.uniform(0.0, 1.0, size=channels)
    fg = rng.uniform(0.0, 1.0, size=channels)
    # keep enough contrast for the class to stay visible
    while np.abs(fg - bg).mean() < 0.3:
        fg = rng.uniform(0.0, 1.0, size=channels)
    img = bg[:, None, None] * (1 - mask) + fg[:, None, None] * mask
    # smooth background shading plus pixel noise
    yy, xx = np.mgrid[0:res, 0:res] / res
    shade = rng.uniform(-0.15, 0.15) * (xx - 0.5) + rng.uniform(-0.15, 0.15) * (yy - 0.5)
    img = img + shade + rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(DTYPE)


def synthetic_dataset(seed: int, count: int, resolution: int = 32, channels: int = 3,
                      num_classes: int = len(SHAPE_CLASSES)) -> Dataset:
    """Deterministic shape images; image ``i`` depends only on ``seed`` and ``i``."""
    if not 1 <= num_classes <= len(SHAPE_CLASSES):
        raise ArgumentError(f"num_classes must lie in [1, {len(SHAPE_CLASSES)}]")
    images = np.empty((count, channels, resolution, resolution), dtype=DTYPE)
    labels = np.empty(count, dtype=np.int64)
    for i in range(count):
        rng = substream(seed, "synthetic", i)
        labels[i] = rng.integers(num_classes)
        images[i] = render_shape(int(labels[i]), resolution, channels, rng)
    return Dataset(images, labels, num_classes)


def _open(path):
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _read_header(blob: bytes, magic: int, ndim: int, path) -> tuple[int, ...]:
    need = 4 + 4 * ndim
    if len(blob) < 4:
        raise FormatError(f"{path}: truncated before magic number", offset=len(blob))
    (found,) = struct.unpack_from(">I", blob, 0)
    if found != magic:
        raise FormatError(f"{path}: magic number 0x{found:08x}, expected 0x{magic:08x}", offset=0)
    if len(blob) < need:
        raise FormatError(f"{path}: truncated header", offset=len(blob))
    return struct.unpack_from(f">{ndim}I", blob, 4)


def read_idx_images(path) -> np.ndarray:
    blob = _open(path)
    count, rows, cols = _read_header(blob, IDX_IMAGES_MAGIC, 3, path)
    body = 16
    expected = body + count * rows * cols
    if len(blob) < expected:
        raise FormatError(f"{path}: {count} images of {rows}x{cols} need {expected} bytes", offset=len(blob))
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes", offset=expected)
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=body).reshape(count, 1, rows, cols)
    return (pixels.astype(np.float64) / 255.0).astype(DTYPE)


def read_idx_labels(path) -> np.ndarray:
    blob = _open(path)
    (count,) = _read_header(blob, IDX_LABELS_MAGIC, 1, path)
    expected = 8 + count
    if len(blob) < expected:
        raise FormatError(f"{path}: {count} labels need {expected} bytes", offset=len(blob))
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes", offset=expected)
    return np.frombuffer(blob, dtype=np.uint8, offset=8).astype(np.int64)


def write_idx(images: np.ndarray | None, labels: np.ndarray | None, images_path=None, labels_path=None) -> None:
    """Write uint8 IDX files (used to build fixtures)."""
    if images is not None:
        arr = np.asarray(images, dtype=np.uint8)
        n, h, w = arr.shape
        Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + arr.tobytes())
    if labels is not None:
        arr = np.asarray(labels, dtype=np.uint8)
        Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(arr)) + arr.tobytes())


def load_idx(images_path, labels_path, num_classes: int | None = None) -> Dataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels", offset=4)
    classes = num_classes or (int(labels.max()) + 1 if len(labels) else 0)
    return Dataset(images, labels, classes)


def load_dataset(source: str, resolution: int = 32) -> Dataset:
    """Load ``synthetic:<seed>:<count>[:<resolution>]`` or ``idx:<images>,<labels>``."""
    source = source.strip()
    if source.startswith("synthetic:"):
        parts = source.split(":")[1:]
        if len(parts) not in (2, 3):
            raise ArgumentError(f"expected synthetic:<seed>:<count>[:<resolution>], got {source!r}")
        try:
            seed, count = int(parts[0]), int(parts[1])
            res = int(parts[2]) if len(parts) == 3 else resolution
        except ValueError:
            raise ArgumentError(f"non-integer field in {source!r}") from None
        return synthetic_dataset(seed, count, res)
    body = source[4:] if source.startswith("idx:") else source
    paths = [p.strip() for p in body.split(",")]
    if len(paths) != 2:
        raise ArgumentError(f"IDX source needs '<images>,<labels>', got {source!r}")
    return load_idx(*paths)
