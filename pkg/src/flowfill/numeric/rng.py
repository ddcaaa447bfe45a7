"""Counter-based random streams.

Each :class:`Rng` wraps numpy's Philox generator keyed by ``(seed, stream)``,
so independent workers (one per dataset record, one per sample) can draw from
disjoint streams without coordinating.
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x64-10"


class Rng:
    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        self.algorithm = ALGORITHM
        self.draws = 0
        self._gen = np.random.Generator(np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64)))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream}, draws={self.draws})"

    def child(self, stream: int) -> "Rng":
        """Independent stream under the same seed, e.g. keyed by record index."""
        return Rng(self.seed ^ (0x9E3779B97F4A7C15 * (self.stream + 1) & 0xFFFFFFFFFFFFFFFF), stream)

    def uniform(self, low=0.0, high=1.0, size=None):
        self.draws += 1
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        self.draws += 1
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        """Integers in ``[low, high)``."""
        self.draws += 1
        return self._gen.integers(low, high, size)

    def geometric(self, p, size=None):
        """Failures before the first success (support starts at 0)."""
        self.draws += 1
        return self._gen.geometric(p, size) - 1

    def random(self, size=None):
        self.draws += 1
        return self._gen.random(size)

    def choice(self, a, size=None, replace=True, p=None):
        self.draws += 1
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def permutation(self, x):
        self.draws += 1
        return self._gen.permutation(x)
