"""Deterministic counter-based random number generation.

The generator is SplitMix64: the k-th raw word is ``mix64(seed + k * GAMMA)``
where ``mix64`` is a fixed avalanche function. Because each word is a pure
function of (seed, k), streams are reproducible bit-for-bit across platforms
and can be generated in vectorized blocks. Constants follow the widely used
SplitMix64 reference values.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4B7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class RngState:
    """Seeded stream of uniform random numbers.

    The state is just (seed, counter); drawing n values advances the counter
    by n. Identical seeds give identical streams on every platform. Instances
    are single-owner: share the numbers, never the state object.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter)

    def clone(self) -> "RngState":
        return RngState(self.seed, self.counter)

    def split(self, tag: int) -> "RngState":
        """Derive an independent child stream for substream `tag`."""
        return RngState(_mix64(self.seed ^ _mix64((int(tag) + 1) * _GAMMA)))

    def raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words as a uint64 array."""
        if n < 0:
            raise ValueError("n must be non-negative")
        start = (self.counter + 1) & _MASK64
        ks = (np.arange(n, dtype=np.uint64) + np.uint64(start)) * np.uint64(_GAMMA)
        z = np.uint64(self.seed) + ks
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self.counter += n
        return z

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        """Uniform float64 samples on [low, high).

        With size=None returns a scalar float; otherwise an array of the
        given shape. Values use the top 53 bits of each raw word, so the
        base resolution is 2**-53 on [0, 1).
        """
        if size is None:
            u = float((self.raw(1)[0] >> np.uint64(11))) * 2.0**-53
            return low + (high - low) * u
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = 1
        for s in shape:
            n *= int(s)
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape)

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            word = self._next_word()
            if word < limit:
                return word % n

    def _next_word(self) -> int:
        self.counter += 1
        return _mix64((self.seed + (self.counter * _GAMMA)) & _MASK64)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n), int64."""
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), ascending."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct values from {n}")
        return sorted(int(i) for i in self.permutation(n)[:k])

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed}, counter={self.counter})"
