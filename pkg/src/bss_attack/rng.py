"""Seeded random substreams.

All randomness in an experiment is derived from one master seed through a
fixed key path (experiment -> method -> sample -> iteration -> transform),
so a result never depends on how work was scheduled across threads.
"""
from __future__ import annotations

import zlib

import numpy as np


def key_of(part) -> int:
    """Map a path component (int or str) to a non-negative integer key."""
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"substream keys must be non-negative, got {part}")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(master_seed: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(key_of(p) for p in path))


def substream(master_seed: int, *path) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *path)))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(rng))
    return np.random.default_rng(rng)


def children(rng, n: int) -> list[np.random.Generator]:
    """``n`` independent child streams of ``rng`` (Generator, SeedSequence or seed)."""
    if isinstance(rng, np.random.SeedSequence):
        return [as_generator(child_sequence(rng, k)) for k in range(n)]
    return as_generator(rng).spawn(n)


def child_sequence(seq, *path) -> np.random.SeedSequence:
    """Extend the spawn key of ``seq`` (SeedSequence or int seed) by ``path``."""
    if not isinstance(seq, np.random.SeedSequence):
        seq = np.random.SeedSequence(int(seq))
    return np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + tuple(key_of(p) for p in path))
