"""MI-FGSM over ensembles of transformed inputs.

Each iteration transforms ``clamp01(x + delta)`` ``N`` times, averages the
loss gradient over the copies, carries it back to ``delta`` and takes a
momentum sign step inside the L-infinity ball.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .baselines import sample_resize_pad, sample_shuffle_rotate, scale_warp
from .bss import AxesMode, BssConfig, sample_bss_warp
from .errors import ArgumentError, ConfigError, NumericError
from .model import Classifier
from .rng import child_sequence, children
from .tensor import clamp01
from .warps import IDENTITY


class GradMode(enum.Enum):
    EXACT = "exact"
    IMAGE_SPACE = "image-space"

    @classmethod
    def parse(cls, value) -> "GradMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("_", "-"))
        except ValueError:
            raise ArgumentError(f"grad mode must be 'exact' or 'image-space', got {value!r}") from None


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 16 / 255
    T: int = 10
    alpha: float | None = None
    mu: float = 1.0
    grad_mode: GradMode = GradMode.EXACT

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ConfigError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.T < 0:
            raise ConfigError(f"T must be >= 0, got {self.T}")
        if self.alpha is not None and self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "grad_mode", GradMode.parse(self.grad_mode))

    @property
    def step_size(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return self.epsilon / max(self.T, 1)


@dataclass
class AttackState:
    delta: np.ndarray
    g: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, shape, dtype=np.float32) -> "AttackState":
        return cls(np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype), 0)


# --- transform methods ---------------------------------------------------------------

@dataclass(frozen=True)
class TransformMethod:
    """A randomized transform family producing ``n`` warps per step."""

    name: str
    n: int = 1

    def sample_warp(self, k: int, height: int, width: int, rng: np.random.Generator):
        raise NotImplementedError

    def sample_warps(self, height: int, width: int, rng) -> list:
        return [self.sample_warp(k, height, width, child) for k, child in enumerate(children(rng, self.n))]

    def with_n(self, n: int) -> "TransformMethod":
        return replace(self, n=n)

    def __call__(self, img: np.ndarray, rng) -> list[np.ndarray]:
        h, w = img.shape[-2:]
        return [warp.apply(img) for warp in self.sample_warps(h, w, rng)]


@dataclass(frozen=True)
class NoTransform(TransformMethod):
    name: str = "none"
    n: int = 1

    def sample_warp(self, k, height, width, rng):
        return IDENTITY

    def with_n(self, n):
        # plain MI-FGSM has no transform to multiply
        return self


@dataclass(frozen=True)
class BssMethod(TransformMethod):
    name: str = "bss"
    n: int = 1
    cfg: BssConfig = field(default_factory=BssConfig)

    def sample_warp(self, k, height, width, rng):
        return sample_bss_warp(height, width, self.cfg, rng)

    def with_n(self, n):
        return replace(self, n=n, cfg=replace(self.cfg, N=n))


@dataclass(frozen=True)
class ScaleEnsemble(TransformMethod):
    name: str = "sim"
    n: int = 5

    def sample_warp(self, k, height, width, rng):
        return scale_warp(k)


@dataclass(frozen=True)
class ResizePad(TransformMethod):
    name: str = "dim"
    n: int = 1
    min_scale: float = 0.85

    def sample_warp(self, k, height, width, rng):
        return sample_resize_pad(height, width, rng, self.min_scale)


@dataclass(frozen=True)
class BlockShuffleRotate(TransformMethod):
    name: str = "bsr"
    n: int = 1
    blocks: int = 2
    max_angle: float = 24.0

    def sample_warp(self, k, height, width, rng):
        return sample_shuffle_rotate(height, width, rng, self.blocks, self.max_angle)


BSS_VARIANTS = {
    "bss": (AxesMode.TWO_AXIS, True),
    "bss-1d": (AxesMode.ONE_AXIS, True),
    "bss-rp": (AxesMode.TWO_AXIS, False),
    "bss-1d-rp": (AxesMode.ONE_AXIS, False),
}
METHOD_NAMES = ("none", *BSS_VARIANTS, "sim", "dim", "bsr")


def make_method(name: str, n: int = 1, bss: BssConfig | None = None, **options) -> TransformMethod:
    """Build a method by name; BSS variants override axes mode and constraint flag of ``bss``."""
    key = name.strip().lower()
    if key == "none":
        return NoTransform()
    if key in BSS_VARIANTS:
        axes, constrained = BSS_VARIANTS[key]
        base = bss or BssConfig()
        cfg = replace(base, N=n, axes_mode=axes, seg=replace(base.seg, constrained=constrained))
        return BssMethod(key, n, cfg)
    if key == "sim":
        return ScaleEnsemble(n=n)
    if key == "dim":
        return ResizePad(n=n, **options)
    if key == "bsr":
        return BlockShuffleRotate(n=n, **options)
    raise ArgumentError(f"unknown method {name!r}; choose from {', '.join(METHOD_NAMES)}")


# --- optimisation -------------------------------------------------------------------

def ensemble_gradient(model: Classifier, x: np.ndarray, delta: np.ndarray, y: int,
                      method: TransformMethod, rng, grad_mode=GradMode.EXACT) -> np.ndarray:
    """Mean loss gradient w.r.t. ``delta`` over the method's ``n`` transforms.

    The clamp to ``[0, 1]`` is passed straight through; each warp is
    differentiated exactly via its adjoint unless ``grad_mode`` is
    image-space, in which case the gradients w.r.t. the transformed copies
    are summed as they are.
    """
    grad_mode = GradMode.parse(grad_mode)
    x_in = clamp01(x + delta)
    h, w = x_in.shape[-2:]
    warps = method.sample_warps(h, w, rng)
    batch = np.stack([warp.apply(x_in) for warp in warps])
    _, grads = model.loss_and_input_grad_batch(batch, np.full(len(warps), y))
    total = np.zeros_like(x_in)
    for warp, gk in zip(warps, grads):
        total += warp.adjoint(gk) if grad_mode is GradMode.EXACT else gk
    return total


def mifgsm_step(state: AttackState, grad: np.ndarray, cfg: AttackConfig) -> AttackState:
    grad = np.asarray(grad, dtype=state.delta.dtype)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient passed to mifgsm_step")
    dt = state.delta.dtype
    norm = np.abs(grad).sum()
    normalized = grad / norm if norm > 0 else np.zeros_like(grad)
    g = np.asarray(cfg.mu, dtype=dt) * state.g + normalized
    eps = np.asarray(cfg.epsilon, dtype=dt)
    delta = np.clip(state.delta + np.asarray(cfg.step_size, dtype=dt) * np.sign(g), -eps, eps)
    return AttackState(delta, g, state.t + 1)


StepHook = Callable[[AttackState], None]


def run_attack(model: Classifier, image: np.ndarray, label: int, method: TransformMethod,
               cfg: AttackConfig, rng=0, on_step: StepHook | None = None) -> np.ndarray:
    """Untargeted MI-FGSM from ``delta = 0``; returns ``clamp01(x + delta_T)``.

    ``rng`` seeds the attack; iteration ``t`` draws its ``n`` transforms from
    child streams keyed ``(t, k)`` below it.
    """
    x = np.asarray(image, dtype=model.dtype)
    seq = rng if isinstance(rng, np.random.SeedSequence) else np.random.SeedSequence(int(rng))
    state = AttackState.zeros(x.shape, x.dtype)
    for t in range(cfg.T):
        grad = ensemble_gradient(model, x, state.delta, label, method, child_sequence(seq, t), cfg.grad_mode)
        state = mifgsm_step(state, grad, cfg)
        if on_step is not None:
            on_step(state)
    return clamp01(x + state.delta)


def evaluate_success(models: Mapping[str, Classifier], adversarial: np.ndarray, labels: Sequence[int],
                     whitebox: str | None = None) -> dict[str, float]:
    """Percentage of samples each model misclassifies; the white-box model gets a ``*`` suffix."""
    labels = np.asarray(labels)
    out = {}
    for name, model in models.items():
        if len(labels) == 0:
            rate = 0.0
        else:
            rate = 100.0 * float(np.mean(model.predict(adversarial) != labels))
        out[f"{name}*" if name == whitebox else name] = rate
    return out

