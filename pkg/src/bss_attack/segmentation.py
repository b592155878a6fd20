"""Constrained random segmentation points and the block plans built from them."""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .errors import ConfigError, DegenerateError, SamplingError, ShapeError
from .tensor import Axis, extent, slice_axis

MAX_DRAWS = 10_000


@dataclass(frozen=True)
class SegmentationConfig:
    M: int = 2
    d_b: int = 35
    d_p: int = 40
    constrained: bool = True

    def __post_init__(self):
        if self.M < 0 or self.d_b < 0 or self.d_p < 0:
            raise ConfigError(f"M, d_b and d_p must be non-negative: {self}")

    def coordinate_range(self, L: int) -> tuple[int, int]:
        """Inclusive range a coordinate may take on an axis of length ``L``."""
        if not self.constrained:
            return 1, L - 1
        # a border margin of 0 would allow a boundary on the image edge
        border = max(self.d_b, 1)
        return border, L - border

    def check_feasible(self, L: int, axis: Axis | None = None) -> None:
        name = axis.name.lower() if axis is not None else "axis"
        if self.M == 0:
            return
        lo, hi = self.coordinate_range(L)
        if self.constrained:
            spacing = max(self.d_p, 1)
            if (self.M - 1) * spacing > hi - lo:
                raise ConfigError(
                    f"infeasible segmentation on {name} of length {L}: "
                    f"(M-1)*d_p = {(self.M - 1) * spacing} > L - 2*d_b = {hi - lo}"
                )
        elif hi - lo + 1 < self.M:
            raise ConfigError(f"{name} of length {L} cannot hold {self.M} distinct interior points")


@dataclass(frozen=True)
class PointSet:
    width: tuple[int, ...]
    height: tuple[int, ...]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.width, self.height))

    def __len__(self):
        return len(self.width)

    def coords(self, axis: Axis) -> tuple[int, ...]:
        return self.width if axis is Axis.WIDTH else self.height


@dataclass(frozen=True)
class SegmentationPlan:
    axis: Axis
    boundaries: tuple[int, ...]

    def __post_init__(self):
        b = self.boundaries
        if len(b) < 2 or b[0] != 0:
            raise DegenerateError(f"boundaries must start at 0 and hold at least two entries: {b}")
        if any(b1 <= b0 for b0, b1 in zip(b, b[1:])):
            raise DegenerateError(f"boundaries must be strictly increasing: {b}")

    @property
    def L(self) -> int:
        return self.boundaries[-1]

    @property
    def lengths(self) -> tuple[int, ...]:
        b = self.boundaries
        return tuple(b1 - b0 for b0, b1 in zip(b, b[1:]))

    def __len__(self):
        return len(self.boundaries) - 1


def _min_gap(coords: np.ndarray) -> int:
    if len(coords) < 2:
        return np.iinfo(np.int64).max
    return int(np.diff(np.sort(coords)).min())


def sample_points(cfg: SegmentationConfig, w: int, h: int, rng: np.random.Generator) -> PointSet:
    """Draw ``cfg.M`` segmentation point pairs inside a ``w x h`` image.

    Each draw is a complete candidate set of ``M`` pairs, uniform over the
    allowed coordinate ranges; it is accepted only if the width coordinates
    and, separately, the height coordinates keep their minimum spacing.
    At most ``MAX_DRAWS`` candidate sets are tried.
    """
    cfg.check_feasible(w, Axis.WIDTH)
    cfg.check_feasible(h, Axis.HEIGHT)
    if cfg.M == 0:
        return PointSet((), ())
    w_lo, w_hi = cfg.coordinate_range(w)
    h_lo, h_hi = cfg.coordinate_range(h)
    spacing = max(cfg.d_p, 1) if cfg.constrained else 1

    rejected = {Axis.WIDTH: 0, Axis.HEIGHT: 0}
    for _ in range(MAX_DRAWS):
        xs = rng.integers(w_lo, w_hi + 1, size=cfg.M)
        ys = rng.integers(h_lo, h_hi + 1, size=cfg.M)
        ok_x = _min_gap(xs) >= spacing
        ok_y = _min_gap(ys) >= spacing
        if ok_x and ok_y:
            return PointSet(tuple(int(v) for v in xs), tuple(int(v) for v in ys))
        rejected[Axis.WIDTH] += not ok_x
        rejected[Axis.HEIGHT] += not ok_y
    worst = max(rejected, key=lambda a: (rejected[a], a is Axis.WIDTH))
    raise SamplingError(
        f"no admissible point set in {MAX_DRAWS} draws; "
        f"the {worst.name.lower()} axis rejected {rejected[worst]} of them",
        axis=worst,
    )


def plan_from_points(points: PointSet, axis: Axis, L: int) -> SegmentationPlan:
    coords = sorted(points.coords(axis))
    for c in coords:
        if not 0 < c < L:
            raise DegenerateError(f"coordinate {c} is not strictly inside (0, {L})")
    if len(set(coords)) != len(coords):
        raise DegenerateError(f"duplicate {axis.name.lower()} coordinates {coords}")
    return SegmentationPlan(axis, (0, *coords, L))


def split(img: np.ndarray, plan: SegmentationPlan) -> list[np.ndarray]:
    n = extent(img, plan.axis)
    if n != plan.L:
        raise ShapeError(f"plan covers {plan.L} pixels but image has {n} along {plan.axis.name.lower()}")
    b = plan.boundaries
    return [slice_axis(img, b0, b1, plan.axis) for b0, b1 in zip(b, b[1:])]

