"""Seeded pseudo-random generator used everywhere randomness is needed.

A single fixed algorithm (SplitMix64) backs synthetic data generation,
weight initialization, shuffling and coordinate sampling, so any run is
reproducible from its seed alone and an independent reimplementation can
match this one bit for bit.  Reference output vectors are listed in
``docs/formats.md`` and pinned by tests.

SplitMix64 is counter-based (output k is a pure mix of ``seed + k*gamma``),
so the array helpers produce exactly the same stream as repeated scalar
calls; Gaussians consume two raw draws each (Box-Muller, sine branch
discarded) to keep that equivalence trivial.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uint64_array(self, n: int) -> np.ndarray:
        """Next ``n`` raw draws, identical to ``n`` scalar calls."""
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        z = np.uint64(self._state) + steps
        self._state = int(z[-1]) if n else self._state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def next_double(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_uint64() >> 11) * 2.0 ** -53

    def doubles(self, n: int) -> np.ndarray:
        return (self.uint64_array(n) >> np.uint64(11)) * 2.0 ** -53

    def uniform(self, lo: float, hi: float, n: int) -> np.ndarray:
        return lo + (hi - lo) * self.doubles(n)

    def next_gauss(self) -> float:
        """Standard normal; consumes exactly two raw draws."""
        u1 = ((self.next_uint64() >> 11) + 1) * 2.0 ** -53  # (0, 1], log finite
        u2 = self.next_double()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def gauss_array(self, n: int) -> np.ndarray:
        raw = self.uint64_array(2 * n)
        u1 = ((raw[0::2] >> np.uint64(11)) + np.uint64(1)) * 2.0 ** -53
        u2 = (raw[1::2] >> np.uint64(11)) * 2.0 ** -53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n), rejection sampled (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        lim = (1 << 64) % n
        while True:
            r = self.next_uint64()
            if r >= lim:
                return r % n

    def shuffle(self, seq) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.next_below(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = np.arange(n)
        self.shuffle(idx)
        return idx

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """First ``k`` entries of a seeded permutation of range(n), sorted."""
        if k > n:
            raise ValueError(f"cannot sample {k} of {n}")
        return np.sort(self.permutation(n)[:k])
