"""Portable seeded random source built on SplitMix64.

Every random draw in the lab flows through this module so that datasets,
adapter inits and batch orders regenerate bit-identically from integer
seeds.  SplitMix64 has fixed 64-bit wrapping semantics, so the integer
stream is exactly reproducible everywhere; the float transforms below
(53-bit uniforms, Box-Muller normals) are deterministic up to the libm
rounding of log/cos/sin on the host.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_PI = 2.0 * math.pi


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood 2014)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_below(self, n: int) -> int:
        """Integer in [0, n); plain modulo (bias < 2**-60 for desk-scale n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def normal(self) -> float:
        """Standard normal via Box-Muller; pairs are cached."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        # +0.5 keeps u1 strictly inside (0, 1) so log(u1) is finite.
        u1 = ((self.next_u64() >> 11) + 0.5) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(_TWO_PI * u2)
        return r * math.cos(_TWO_PI * u2)

    def normal_matrix(self, rows: int, cols: int, std: float = 1.0) -> np.ndarray:
        """Row-major (rows, cols) array of N(0, std**2) draws."""
        out = np.empty(rows * cols, dtype=np.float64)
        for i in range(out.size):
            out[i] = self.normal()
        if std != 1.0:
            out *= std
        return out.reshape(rows, cols)

    def normal_vector(self, n: int, std: float = 1.0) -> np.ndarray:
        return self.normal_matrix(1, n, std).reshape(n)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.next_below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx


def derive_seed(seed: int, stream: int) -> int:
    """Decorrelated child seed for a named stream of one experiment seed."""
    return SplitMix64((seed & _MASK64) ^ ((stream * _GOLDEN) & _MASK64)).next_u64()
