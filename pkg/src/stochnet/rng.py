"""Reproducible random streams.

Every stochastic operation in this package takes an explicit RngStream.
Streams are counter-based (Philox) and splittable: a stream can derive
child streams addressed by an integer path, and the derivation depends
only on (seed, path), never on how many numbers were drawn elsewhere.
This is what makes sampled traces, training runs, and Gibbs chains
reproducible regardless of batching or parallel scheduling.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RngStream"]


class RngStream:
    """A splittable counter-based random stream.

    Same (seed, path) always yields the identical number sequence.
    Child streams from :meth:`substream` are statistically independent
    of the parent and of siblings with different paths.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(sequence))

    def substream(self, *indices: int) -> "RngStream":
        """Derive the child stream addressed by `indices`."""
        return RngStream(self.seed, self.path + tuple(int(i) for i in indices))

    def uniform(self, size=None):
        """Uniform draws in [0, 1)."""
        return self._gen.random(size)

    def uniform_range(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def normal(self, scale: float = 1.0, size=None):
        return self._gen.normal(0.0, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
