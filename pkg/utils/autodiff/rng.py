"""Seeded, splittable random streams.

Every stochastic operation (initialization, noise draws, time-step draws)
takes a `RandomStream` explicitly so a run consumes one ordered stream.
"""

import hashlib
from typing import Sequence, Tuple, Union

import numpy as np

Key = Union[int, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"Stream keys must be non-negative, got {key}")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RandomStream:
    """
    A PCG64 stream identified by (seed, key path).

    Children derived with `spawn` are independent of how much of the parent
    has been consumed, so the same (seed, key path) always yields the same
    numbers.

    Args:
        seed: Master seed
        key: Key path below the master seed (ints or strings)
    """

    def __init__(self, seed: int, key: Sequence[Key] = ()):
        self.seed = int(seed)
        self.key: Tuple[int, ...] = tuple(_key_to_int(k) for k in key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def spawn(self, *key: Key) -> "RandomStream":
        return RandomStream(self.seed, self.key + tuple(_key_to_int(k) for k in key))

    def uniform(self, size) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return self._generator.random(size)

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws via Box-Muller on the stream's uniforms."""
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        pairs = (count + 1) // 2
        u1 = 1.0 - self._generator.random(pairs)  # (0, 1]
        u2 = self._generator.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        values = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:count]
        return values.reshape(shape)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        """Integers on the closed range [low, high]."""
        return self._generator.integers(low, high, size=size, endpoint=True)

    def choice(self, n: int, size=None) -> np.ndarray:
        """Indices drawn uniformly from range(n)."""
        return self._generator.integers(0, n, size=size)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, key={self.key})"


def as_stream(seed: Union[int, RandomStream]) -> RandomStream:
    return seed if isinstance(seed, RandomStream) else RandomStream(seed)
