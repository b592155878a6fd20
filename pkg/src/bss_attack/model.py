"""Differentiable classifiers with exact input gradients.

``TinyConvNet`` is a small two-stage convolutional network written directly
in numpy with a hand-derived backward pass. It runs in float32 for attacks
and can be cast to float64 for gradient checking.
"""
from __future__ import annotations

import logging
import struct
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, FormatError, NumericError, ShapeError, TrainingError
from .rng import as_generator

log = logging.getLogger(__name__)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    b = logits.shape[0]
    idx = np.arange(b)
    loss = -log_p[idx, labels].mean()
    dlogits = np.exp(log_p)
    dlogits[idx, labels] -= 1
    dlogits /= b
    return float(loss), dlogits.astype(logits.dtype, copy=False)


class Classifier:
    """Batch-first classifier interface used by the attacks.

    Subclasses implement ``_logits`` and ``_loss_grad`` on batches shaped
    ``(B, C, H, W)``; the single-image methods wrap them.
    """

    num_classes: int
    input_shape: tuple[int, int, int]
    dtype = np.float32

    def __init__(self):
        self._lock = threading.Lock()
        self.evaluations = 0

    def _count(self, n: int) -> None:
        with self._lock:
            self.evaluations += n

    def _check_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.input_shape):
            raise ShapeError(f"expected batch of {self.input_shape} images, got {x.shape}")
        return x

    def _check_labels(self, labels, b: int) -> np.ndarray:
        y = np.asarray(labels, dtype=np.int64).reshape(-1)
        if y.shape[0] != b:
            raise ShapeError(f"{y.shape[0]} labels for a batch of {b}")
        if np.any(y < 0) or np.any(y >= self.num_classes):
            raise ArgumentError(f"labels must lie in [0, {self.num_classes})")
        return y

    def logits_batch(self, x: np.ndarray) -> np.ndarray:
        x = self._check_batch(x)
        self._count(x.shape[0])
        out = self._logits(x)
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite logits")
        return out

    def loss_and_input_grad_batch(self, x: np.ndarray, labels) -> tuple[float, np.ndarray]:
        """Mean cross-entropy over the batch and its gradient w.r.t. every input."""
        x = self._check_batch(x)
        y = self._check_labels(labels, x.shape[0])
        self._count(x.shape[0])
        loss, grad = self._loss_grad(x, y)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise NumericError("non-finite loss or gradient")
        return loss, grad

    def forward(self, img: np.ndarray) -> np.ndarray:
        return self.logits_batch(np.asarray(img)[None])[0]

    def loss_and_input_grad(self, img: np.ndarray, label: int) -> tuple[float, np.ndarray]:
        loss, grad = self.loss_and_input_grad_batch(np.asarray(img)[None], [label])
        return loss, grad[0]

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        x = np.asarray(x)
        out = [self.logits_batch(x[i:i + batch_size]).argmax(axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def accuracy(self, images: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(images) == np.asarray(labels)))

    def _logits(self, x):
        raise NotImplementedError

    def _loss_grad(self, x, y):
        raise NotImplementedError


class LinearSoftmax(Classifier):
    """``logits = W @ vec(x) + b``; handy as an analytic oracle."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray | None = None,
                 input_shape: tuple[int, int, int] | None = None, dtype=np.float32):
        super().__init__()
        self.dtype = dtype
        self.weight = np.asarray(weight, dtype=dtype)
        self.num_classes = self.weight.shape[0]
        if input_shape is None:
            input_shape = (1, 1, self.weight.shape[1])
        if int(np.prod(input_shape)) != self.weight.shape[1]:
            raise ShapeError(f"input shape {input_shape} does not match weight {self.weight.shape}")
        self.input_shape = tuple(input_shape)
        self.bias = np.zeros(self.num_classes, dtype=dtype) if bias is None else np.asarray(bias, dtype=dtype)

    def _logits(self, x):
        return x.reshape(len(x), -1) @ self.weight.T + self.bias

    def _loss_grad(self, x, y):
        loss, dlogits = softmax_cross_entropy(self._logits(x), y)
        return loss, (dlogits @ self.weight).reshape(x.shape)


@dataclass(frozen=True)
class ArchConfig:
    in_channels: int = 3
    height: int = 32
    width: int = 32
    c1: int = 8
    c2: int = 16
    num_classes: int = 10

    def __post_init__(self):
        if self.height % 4 or self.width % 4:
            raise ArgumentError(f"height and width must be multiples of 4, got {self.height}x{self.width}")
        if min(self.in_channels, self.c1, self.c2, self.num_classes) < 1:
            raise ArgumentError(f"all architecture sizes must be positive: {self}")

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        feat = self.c2 * (self.height // 4) * (self.width // 4)
        return {
            "conv1_w": (self.c1, self.in_channels, 3, 3),
            "conv1_b": (self.c1,),
            "conv2_w": (self.c2, self.c1, 3, 3),
            "conv2_b": (self.c2,),
            "fc_w": (self.num_classes, feat),
            "fc_b": (self.num_classes,),
        }

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes.values())


def _conv3x3(x, w, b):
    n, c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # n, c, h, w, 3, 3
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * 9)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return out.reshape(n, h, wd, -1).transpose(0, 3, 1, 2), cols


def _conv3x3_backward(dout, cols, w, x_shape, need_params):
    n, c, h, wd = x_shape
    cout = w.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, cout)
    dw = db = None
    if need_params:
        dw = (d2.T @ cols).reshape(w.shape)
        db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(cout, -1)).reshape(n, h, wd, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, wd + 2), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + h, j:j + wd] += dcols[..., i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _avgpool2(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def _avgpool2_backward(dout):
    return np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) * np.asarray(0.25, dtype=dout.dtype)


class TinyConvNet(Classifier):
    """conv3x3 -> ReLU -> avgpool2 -> conv3x3 -> ReLU -> avgpool2 -> linear."""

    def __init__(self, arch: ArchConfig = ArchConfig(), params: np.ndarray | None = None,
                 seed: int = 0, dtype=np.float32):
        super().__init__()
        self.arch = arch
        self.dtype = dtype
        self.num_classes = arch.num_classes
        self.input_shape = (arch.in_channels, arch.height, arch.width)
        if params is None:
            params = self.init_params(arch, seed)
        params = np.asarray(params, dtype=dtype).reshape(-1)
        if params.size != arch.num_params:
            raise ShapeError(f"expected {arch.num_params} parameters, got {params.size}")
        self.params = params.copy()

    @staticmethod
    def init_params(arch: ArchConfig, seed) -> np.ndarray:
        rng = as_generator(seed)
        parts = []
        for name, shape in arch.shapes.items():
            if name.endswith("_b"):
                parts.append(np.zeros(shape))
                continue
            fan_in = int(np.prod(shape[1:]))
            gain = 2.0 if name.startswith("conv") else 1.0
            parts.append(rng.normal(0.0, np.sqrt(gain / fan_in), size=shape))
        return np.concatenate([p.reshape(-1) for p in parts])

    def unflatten(self, flat: np.ndarray | None = None) -> dict[str, np.ndarray]:
        flat = self.params if flat is None else flat
        out, pos = {}, 0
        for name, shape in self.arch.shapes.items():
            size = int(np.prod(shape))
            out[name] = flat[pos:pos + size].reshape(shape)
            pos += size
        return out

    def astype(self, dtype) -> "TinyConvNet":
        return TinyConvNet(self.arch, self.params, dtype=dtype)

    def _forward(self, x):
        p = self.unflatten()
        z1, cols1 = _conv3x3(x, p["conv1_w"], p["conv1_b"])
        a1 = np.maximum(z1, 0)
        h1 = _avgpool2(a1)
        z2, cols2 = _conv3x3(h1, p["conv2_w"], p["conv2_b"])
        a2 = np.maximum(z2, 0)
        h2 = _avgpool2(a2)
        flat = h2.reshape(len(x), -1)
        logits = flat @ p["fc_w"].T + p["fc_b"]
        cache = (x.shape, cols1, z1, h1.shape, cols2, z2, h2.shape, flat)
        return logits, cache

    def _backward(self, dlogits, cache, need_params=False):
        p = self.unflatten()
        x_shape, cols1, z1, h1_shape, cols2, z2, h2_shape, flat = cache
        dflat = dlogits @ p["fc_w"]
        dz2 = _avgpool2_backward(dflat.reshape(h2_shape)) * (z2 > 0)
        dh1, dw2, db2 = _conv3x3_backward(dz2, cols2, p["conv2_w"], h1_shape, need_params)
        dz1 = _avgpool2_backward(dh1) * (z1 > 0)
        dx, dw1, db1 = _conv3x3_backward(dz1, cols1, p["conv1_w"], x_shape, need_params)
        if not need_params:
            return dx, None
        grads = {
            "conv1_w": dw1, "conv1_b": db1, "conv2_w": dw2, "conv2_b": db2,
            "fc_w": dlogits.T @ flat, "fc_b": dlogits.sum(axis=0),
        }
        return dx, np.concatenate([grads[k].reshape(-1) for k in self.arch.shapes])

    def _logits(self, x):
        return self._forward(x)[0]

    def _loss_grad(self, x, y):
        logits, cache = self._forward(x)
        loss, dlogits = softmax_cross_entropy(logits, y)
        dx, _ = self._backward(dlogits, cache)
        return loss, dx

    def loss_and_param_grad(self, x, y) -> tuple[float, np.ndarray, np.ndarray]:
        x = self._check_batch(x)
        y = self._check_labels(y, x.shape[0])
        logits, cache = self._forward(x)
        loss, dlogits = softmax_cross_entropy(logits, y)
        _, dparams = self._backward(dlogits, cache, need_params=True)
        return loss, dparams, logits

    def checksum(self) -> str:
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.params, dtype="<f4").tobytes()).hexdigest()[:16]


def _zoom_matrix(L: int, scale: float, shift: float) -> np.ndarray:
    # output pixel i samples source coordinate (i + 0.5 - L/2) / scale + L/2 - 0.5 + shift
    i = np.arange(L, dtype=np.float64)
    coord = np.clip((i + 0.5 - L / 2) / scale + L / 2 - 0.5 + shift, 0.0, L - 1)
    lo = np.floor(coord).astype(np.int64)
    hi = np.minimum(lo + 1, L - 1)
    frac = coord - lo
    mat = np.zeros((L, L))
    np.add.at(mat, (i.astype(np.int64), lo), 1 - frac)
    np.add.at(mat, (i.astype(np.int64), hi), frac)
    return mat


def random_zoom(images: np.ndarray, rng: np.random.Generator, scale=(0.8, 1.25), max_shift: float = 3.0) -> np.ndarray:
    """Random per-axis zoom and translation (edge-clamped), one draw per image.

    The usual random-resized-crop style augmentation; it gives the trained
    networks the mild resize tolerance that ImageNet classifiers have.
    """
    out = np.empty_like(images)
    _, _, h, w = images.shape
    for n, img in enumerate(images):
        sh, sw = rng.uniform(*scale, size=2)
        dh, dw = rng.uniform(-max_shift, max_shift, size=2)
        mh = _zoom_matrix(h, sh, dh).astype(images.dtype)
        mw = _zoom_matrix(w, sw, dw).astype(images.dtype)
        out[n] = mh @ img @ mw.T
    return out


@dataclass
class TrainReport:
    epochs: int
    losses: list[float]
    train_accuracy: float
    heldout_accuracy: float | None


def train(model: TinyConvNet, images: np.ndarray, labels: np.ndarray, epochs: int, lr: float, rng,
          batch_size: int = 64, momentum: float = 0.9,
          heldout: tuple[np.ndarray, np.ndarray] | None = None, augment=False,
          schedule: str = "constant") -> TrainReport:
    """Minibatch SGD with momentum on mean cross-entropy; updates ``model`` in place.

    With ``augment=True`` every minibatch passes through :func:`random_zoom`;
    a callable ``augment(images, rng)`` replaces it.
    ``schedule="cosine"`` anneals the learning rate to zero over all steps.
    """
    if schedule not in ("constant", "cosine"):
        raise ArgumentError(f"schedule must be 'constant' or 'cosine', got {schedule!r}")
    images = np.asarray(images, dtype=model.dtype)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ArgumentError("training data is empty")
    rng = as_generator(rng)
    velocity = np.zeros_like(model.params)
    steps = epochs * -(-len(images) // batch_size)
    step = 0
    mom = np.asarray(momentum, dtype=model.dtype)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(images))
        total, seen = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            if callable(augment):
                batch = np.asarray(augment(images[idx], rng), dtype=model.dtype)
            else:
                batch = random_zoom(images[idx], rng) if augment else images[idx]
            loss, grad, _ = model.loss_and_param_grad(batch, labels[idx])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingError(f"training diverged in epoch {epoch} (loss={loss})")
            rate = lr if schedule == "constant" else 0.5 * lr * (1.0 + np.cos(np.pi * step / steps))
            step += 1
            velocity = mom * velocity - np.asarray(rate, dtype=model.dtype) * grad
            model.params = model.params + velocity
            total += loss * len(idx)
            seen += len(idx)
        losses.append(total / seen)
        log.debug("epoch %d loss %.4f", epoch, losses[-1])
    train_acc = model.accuracy(images, labels)
    held = model.accuracy(*heldout) if heldout is not None else None
    return TrainReport(epochs, losses, train_acc, held)


CKPT_MAGIC = b"TCNV"
CKPT_VERSION = 1
_HEADER = struct.Struct("<4sI6II")


def save_checkpoint(model: TinyConvNet, path) -> Path:
    a = model.arch
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(CKPT_MAGIC, CKPT_VERSION, a.in_channels, a.height, a.width, a.c1, a.c2,
                          a.num_classes, model.params.size)
    path.write_bytes(header + np.asarray(model.params, dtype="<f4").tobytes())
    return path


def load_checkpoint(path) -> TinyConvNet:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"checkpoint {path} truncated in header", offset=len(blob))
    magic, version, *dims, count = _HEADER.unpack_from(blob)
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", offset=0)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    arch = ArchConfig(*dims)
    if count != arch.num_params:
        raise FormatError(f"parameter count {count} does not match architecture ({arch.num_params})",
                          offset=_HEADER.size - 4)
    expected = _HEADER.size + 4 * count
    if len(blob) != expected:
        raise FormatError(f"checkpoint holds {len(blob)} bytes, expected {expected}", offset=len(blob))
    params = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float32)
    return TinyConvNet(arch, params)


def arch_to_dict(arch: ArchConfig) -> dict:
    return asdict(arch)
