"""Deterministic random-stream plumbing.

Every stochastic consumer in the toolkit draws from its own named child
stream of a single root seed. Streams are derived through
``numpy.random.SeedSequence`` spawn keys, so adding or removing one
consumer (e.g. the meta phase of a training step) never shifts the draws
seen by any other consumer. That property is what makes the baseline
reduction identities bit-exact.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def root_sequence(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed))


def child_sequence(base: np.random.SeedSequence, *key: int | str) -> np.random.SeedSequence:
    """Derive a child SeedSequence under a stable (int|str, ...) key."""
    parts = tuple(_key(k) for k in key)
    return np.random.SeedSequence(entropy=base.entropy, spawn_key=base.spawn_key + parts)


def stream(base: np.random.SeedSequence, *key: int | str) -> np.random.Generator:
    """A fresh Generator for the given purpose key."""
    return np.random.Generator(np.random.PCG64(child_sequence(base, *key)))


def generator(seed: int) -> np.random.Generator:
    """Plain seeded generator for standalone use (tests, small ops)."""
    return np.random.Generator(np.random.PCG64(root_sequence(seed)))
