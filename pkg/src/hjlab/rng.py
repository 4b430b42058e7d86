"""Deterministic, splittable random streams.

Every random draw in the package comes from a Philox counter-based
generator keyed by an explicit integer tuple (seed, stream, step, tag, ...).
The same key always yields the same draws, independent of call order or
thread scheduling, which is what makes common-random-number comparisons
and byte-identical reports possible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Purpose tags so different uses of the same (seed, stream) never collide.
TAG_GAUSS = 11
TAG_JUMP_COUNT = 12
TAG_JUMP_SIZE = 13
TAG_PLAN_FILL = 14
TAG_FIELD = 15
TAG_PAIRS = 16
TAG_CLOUD = 17
TAG_GENERATOR_JUMPS = 18
TAG_ORACLE = 19


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator keyed by (seed, *path). Identical keys give identical draws."""
    entropy = [int(seed) & _MASK64] + [int(p) & _MASK64 for p in path]
    ss = np.random.SeedSequence(entropy)
    return np.random.Generator(np.random.Philox(ss))
