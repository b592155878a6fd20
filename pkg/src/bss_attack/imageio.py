"""PNG / binary PPM image files and raw float32 dumps.

Bytes ``v`` map to ``v / 255``; floats map back with round-half-up after
clipping to ``[0, 1]``.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ShapeError
from .tensor import DTYPE, as_image


def to_bytes(img: np.ndarray) -> np.ndarray:
    img = as_image(img, dtype=np.float64)
    scaled = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5)
    return scaled.astype(np.uint8)


def from_bytes(arr: np.ndarray) -> np.ndarray:
    return (np.asarray(arr, dtype=np.float64) / 255.0).astype(DTYPE)


def _to_pil(img: np.ndarray) -> Image.Image:
    data = to_bytes(img)
    channels = data.shape[0]
    if channels == 1:
        return Image.fromarray(data[0], mode="L")
    if channels == 3:
        return Image.fromarray(np.transpose(data, (1, 2, 0)), mode="RGB")
    raise ShapeError(f"only 1- or 3-channel images can be written, got {channels}")


def write_png(img: np.ndarray, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _to_pil(img).save(path, format="PNG")
    return path


def write_ppm(img: np.ndarray, path) -> Path:
    """Write a binary P6 file; single-channel images are replicated to RGB."""
    data = to_bytes(img)
    if data.shape[0] == 1:
        data = np.repeat(data, 3, axis=0)
    if data.shape[0] != 3:
        raise ShapeError(f"PPM needs 1 or 3 channels, got {data.shape[0]}")
    _, h, w = data.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(np.transpose(data, (1, 2, 0))).tobytes())
    return path


def read_image(path) -> np.ndarray:
    """Read a PNG or PPM file into a C x H x W float image in ``[0, 1]``."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im)
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = np.transpose(arr, (2, 0, 1))
    return from_bytes(arr)


_RAW_MAGIC = b"F32R"


def write_raw(arr: np.ndarray, path) -> Path:
    """Signed float32 dump: magic, rank, dims (uint32 LE), then data (LE)."""
    arr = np.asarray(arr, dtype="<f4")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_RAW_MAGIC)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())
    return path


def read_raw(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != _RAW_MAGIC:
        raise FormatError(f"bad raw magic {blob[:4]!r}", offset=0)
    if len(blob) < 8:
        raise FormatError("truncated raw header", offset=len(blob))
    (ndim,) = struct.unpack_from("<I", blob, 4)
    header = 8 + 4 * ndim
    if len(blob) < header:
        raise FormatError("truncated raw header", offset=len(blob))
    shape = struct.unpack_from(f"<{ndim}I", blob, 8)
    count = int(np.prod(shape)) if ndim else 1
    if len(blob) != header + 4 * count:
        raise FormatError(f"expected {count} float32 values", offset=len(blob))
    return np.frombuffer(blob, dtype="<f4", offset=header).reshape(shape).astype(np.float32)
