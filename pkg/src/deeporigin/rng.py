"""Labeled deterministic random streams.

Every source of randomness in the pipeline draws from an RngStream keyed by
(seed, label). Identical (seed, label, draw order) always reproduces the same
values, on any platform: the label is folded into the seed via SHA-256, never
via Python's per-process string hash.
"""

from __future__ import annotations

import hashlib

import numpy as np


class RngStream:
    """A named, seeded random stream backed by PCG64."""

    def __init__(self, seed: int, label: str):
        self.seed = int(seed)
        self.label = label
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *words])
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, shape) -> np.ndarray:
        return self._gen.random(size=shape, dtype=np.float64)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(loc=0.0, scale=scale, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        # high is inclusive; matches drawing calendar days from a closed range
        return self._gen.integers(low, high, size=shape, endpoint=True)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, label={self.label!r})"
