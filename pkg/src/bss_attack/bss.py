"""Block Stretch and Shrink (BSS).

An image is cut into blocks along one axis at constrained random points;
each block is resized by bilinear interpolation to a randomly reweighted
share of the axis so the total extent is unchanged, and the pieces are
concatenated. The same points are then reused along the orthogonal axis.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .errors import ArgumentError, ConfigError, DegenerateError, InfeasibleError, ShapeError
from .rng import as_generator, children
from .segmentation import SegmentationConfig, SegmentationPlan, plan_from_points, sample_points, split
from .tensor import Axis, concat_axis, extent, interp_matrix, resize_axis_bilinear
from .warps import SeparableWarp


class AxesMode(enum.Enum):
    TWO_AXIS = "two"
    ONE_AXIS = "one"


class TargetLengthMode(enum.Enum):
    TOTAL_SHARE = "total"
    PER_BLOCK_LITERAL = "literal"

    @classmethod
    def parse(cls, value) -> "TargetLengthMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"total": cls.TOTAL_SHARE, "totalshare": cls.TOTAL_SHARE,
                   "literal": cls.PER_BLOCK_LITERAL, "perblockliteral": cls.PER_BLOCK_LITERAL}
        try:
            return aliases[key.replace("_", "").replace("-", "")]
        except KeyError:
            raise ArgumentError(f"unknown target length mode {value!r}") from None


@dataclass(frozen=True)
class BssConfig:
    seg: SegmentationConfig = field(default_factory=SegmentationConfig)
    r: float = 1.0
    N: int = 1
    axes_mode: AxesMode = AxesMode.TWO_AXIS
    target_length_mode: TargetLengthMode = TargetLengthMode.TOTAL_SHARE

    def __post_init__(self):
        if not 0.0 <= self.r <= 2.0:
            raise ConfigError(f"range-to-center ratio must lie in [0, 2], got {self.r}")
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")


@dataclass(frozen=True)
class StretchPlan:
    factors: tuple[float, ...]
    weights: tuple[float, ...]
    targets: tuple[int, ...]
    adjusted: tuple[int, ...]


def sample_factors(count: int, r: float, rng) -> np.ndarray:
    if not 0.0 <= r <= 2.0:
        raise ArgumentError(f"r must lie in [0, 2], got {r}")
    if count < 1:
        raise ArgumentError(f"count must be >= 1, got {count}")
    lo, hi = (1 - r / 2) / 2, (1 + r / 2) / 2
    return as_generator(rng).uniform(lo, hi, size=count)


def normalize_weights(factors) -> np.ndarray:
    s = np.asarray(factors, dtype=np.float64)
    total = s.sum()
    if not total > 0:
        raise DegenerateError(f"factors sum to {total}; cannot normalize")
    return s / total


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def target_lengths(lengths: Sequence[int], weights: Sequence[float], L: int,
                   mode: TargetLengthMode = TargetLengthMode.TOTAL_SHARE) -> list[int]:
    if len(lengths) != len(weights):
        raise ArgumentError(f"{len(lengths)} lengths but {len(weights)} weights")
    if sum(lengths) != L:
        raise ArgumentError(f"lengths sum to {sum(lengths)}, expected {L}")
    mode = TargetLengthMode.parse(mode)
    if mode is TargetLengthMode.TOTAL_SHARE:
        return [round_half_away(L * w) for w in weights]
    return [round_half_away(l * w) for l, w in zip(lengths, weights)]


def adj(targets: Sequence[int], L: int) -> list[int]:
    """Force integer block lengths to be >= 1 and to sum to ``L``.

    Missing pixels are handed out one at a time to blocks taken from the
    largest down (ties to the lowest index), cycling until the sum is
    reached; surplus pixels are removed the same way from the smallest
    blocks that are still longer than 1.
    """
    n = len(targets)
    if n == 0:
        raise ArgumentError("adj needs at least one target length")
    if L < n:
        raise InfeasibleError(f"cannot give {n} blocks a length >= 1 within L={L}")
    out = [max(1, int(t)) for t in targets]
    diff = L - sum(out)
    if diff > 0:
        order = sorted(range(n), key=lambda i: (-out[i], i))
        rounds, rest = divmod(diff, n)
        for rank, i in enumerate(order):
            out[i] += rounds + (rank < rest)
    elif diff < 0:
        out = _remove_surplus(out, -diff)
    return out


def _remove_surplus(out: list[int], surplus: int) -> list[int]:
    # A full pass takes one pixel from every block above 1, so after p passes
    # a block holds max(1, t - p). Find the largest p that fits, then finish
    # with a partial pass over the smallest blocks still above 1.
    excess = sorted(v - 1 for v in out)
    n = len(excess)
    removed = level = 0
    for k, e in enumerate(excess):
        active = n - k
        step = (e - level) * active
        if removed + step > surplus:
            whole = (surplus - removed) // active
            level += whole
            removed += whole * active
            break
        removed += step
        level = e
    out = [v - min(v - 1, level) for v in out]
    rest = surplus - removed
    if rest:
        order = sorted((i for i in range(n) if out[i] > 1), key=lambda i: (out[i], i))
        for i in order[:rest]:
            out[i] -= 1
    return out


def sample_stretch(plan: SegmentationPlan, cfg: BssConfig, rng) -> StretchPlan:
    lengths = plan.lengths
    factors = sample_factors(len(lengths), cfg.r, rng)
    weights = normalize_weights(factors)
    targets = target_lengths(lengths, weights, plan.L, cfg.target_length_mode)
    adjusted = adj(targets, plan.L)
    return StretchPlan(tuple(factors.tolist()), tuple(weights.tolist()), tuple(targets), tuple(adjusted))


def axis_matrix(plan: SegmentationPlan, stretch: StretchPlan) -> np.ndarray:
    """``L x L`` block-diagonal matrix resizing each block to its adjusted length."""
    return block_diag(*(interp_matrix(l, l2) for l, l2 in zip(plan.lengths, stretch.adjusted)))


def apply_stretch(img: np.ndarray, plan: SegmentationPlan, stretch: StretchPlan) -> np.ndarray:
    blocks = split(img, plan)
    resized = [resize_axis_bilinear(b, l2, plan.axis) for b, l2 in zip(blocks, stretch.adjusted)]
    return concat_axis(resized, plan.axis)


def stretch_axis(img: np.ndarray, plan: SegmentationPlan, cfg: BssConfig, rng) -> np.ndarray:
    return apply_stretch(img, plan, sample_stretch(plan, cfg, rng))


@dataclass(frozen=True)
class BssWarp:
    """One sampled BSS transform: the axis steps in the order they apply."""

    steps: tuple[tuple[SegmentationPlan, StretchPlan], ...]

    def apply_blocks(self, img: np.ndarray) -> np.ndarray:
        out = img
        for plan, stretch in self.steps:
            out = apply_stretch(out, plan, stretch)
        return out if out is not img else img.copy()

    def operator(self, dtype=np.float32) -> SeparableWarp:
        cache = self.__dict__.setdefault("_operators", {})
        key = np.dtype(dtype)
        if key not in cache:
            mats = {plan.axis: axis_matrix(plan, stretch).astype(dtype) for plan, stretch in self.steps}
            cache[key] = SeparableWarp(height=mats.get(Axis.HEIGHT), width=mats.get(Axis.WIDTH))
        return cache[key]

    def apply(self, img: np.ndarray) -> np.ndarray:
        return self.operator(img.dtype).apply(img)

    def adjoint(self, grad: np.ndarray) -> np.ndarray:
        return self.operator(grad.dtype).adjoint(grad)


def sample_bss_warp(height: int, width: int, cfg: BssConfig, rng) -> BssWarp:
    """Sample the random quantities of one BSS transform for an image size."""
    rng = as_generator(rng)
    need = cfg.seg.M + 1
    if height < need or width < need:
        raise ShapeError(f"image {height}x{width} too small for {need} blocks per axis")
    points = sample_points(cfg.seg, width, height, rng)
    first = Axis.HEIGHT if rng.integers(2) == 0 else Axis.WIDTH
    axes = [first] if cfg.axes_mode is AxesMode.ONE_AXIS else [first, first.other]
    steps = []
    for axis in axes:
        L = height if axis is Axis.HEIGHT else width
        plan = plan_from_points(points, axis, L)
        steps.append((plan, sample_stretch(plan, cfg, rng)))
    return BssWarp(tuple(steps))


def bss_transform(img: np.ndarray, cfg: BssConfig, rng) -> np.ndarray:
    warp = sample_bss_warp(extent(img, Axis.HEIGHT), extent(img, Axis.WIDTH), cfg, rng)
    return warp.apply_blocks(img)


def transform_set(img: np.ndarray, cfg: BssConfig, rng) -> list[np.ndarray]:
    """``cfg.N`` independent BSS variants of ``img``, one child stream each."""
    return [bss_transform(img, cfg, child) for child in children(rng, cfg.N)]
