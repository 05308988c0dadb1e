"""Seedable counter-based random streams for portable, order-documented sampling.

The generator is splitmix64 in counter form: word(i) = mix(key + GOLDEN * (i + 1)),
where the key is derived from (seed, stream). Streams with different ids are
independent, so the draw order of one parameter never shifts another's values.

Draw accounting (documented so seeds stay portable):
  - uniform(shape)  consumes one word per element, row-major.
  - normal(shape)   consumes 2 * ceil(n/2) words; values are Box-Muller pairs
    (cos half first, then sin half), truncated to n and reshaped row-major.
  - integers(upper) consumes one word per element (floor(uniform * upper)).
"""

from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; operands stay uint64 arrays so overflow wraps silently
    z = (z ^ (z >> np.uint64(30))) * np.asarray(_MIX_A, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(27))) * np.asarray(_MIX_B, dtype=np.uint64)
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Deterministic stream of uniforms/normals addressed by (seed, stream, counter)."""

    def __init__(self, seed: int, stream: int = 0):
        s = _mix(np.asarray([seed & _MASK], dtype=np.uint64))
        t = _mix(np.asarray([((stream & _MASK) * _GOLDEN + _GOLDEN) & _MASK], dtype=np.uint64))
        self._key = (s ^ t)[0]
        self._counter = 0

    def _words(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _mix(np.asarray(self._key, dtype=np.uint64) + np.asarray(_GOLDEN, dtype=np.uint64) * idx)

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform f64 samples in [0, 1) with 53-bit resolution."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self._words(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape)

    def normal(self, shape=()) -> np.ndarray:
        """Standard normal samples via Box-Muller."""
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        w = self._words(2 * pairs)
        u1 = ((w[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53  # (0, 1]
        u2 = (w[pairs:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])[:n]
        return z.reshape(shape)

    def integers(self, upper: int, shape=()) -> np.ndarray:
        """Integers in [0, upper). Fine for toy batching; not rejection-sampled."""
        if upper <= 0:
            raise ValueError("upper must be positive")
        u = self.uniform(shape)
        return np.minimum((u * upper).astype(np.int64), upper - 1)
