"""Portable deterministic random number generation.

The camera-side sampler, the oracle detector and the weight initializer all
need randomness that reproduces bit-for-bit across machines and languages,
so this module pins one concrete generator instead of deferring to library
RNGs whose stream definitions may drift.

Generator: xorshift64* (Marsaglia xorshift with shifts 12/25/27 and output
multiplier 0x2545F4914F6CDD1D). State is seeded through one round of
splitmix64 so that small consecutive seeds produce unrelated streams; a
seed that maps to the forbidden all-zero state falls back to the splitmix64
increment constant.
"""

from __future__ import annotations

_MASK64 = 0xFFFFFFFFFFFFFFFF
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_XORSHIFT_MULT = 0x2545F4914F6CDD1D


def _splitmix64(x: int) -> int:
    x = (x + _SPLITMIX_GAMMA) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class Xorshift64Star:
    """xorshift64* stream with rejection-sampled bounded draws."""

    def __init__(self, seed: int):
        state = _splitmix64(seed & _MASK64)
        self._state = state if state != 0 else _SPLITMIX_GAMMA

    def next_u64(self) -> int:
        s = self._state
        s ^= (s >> 12)
        s ^= (s << 25) & _MASK64
        s ^= (s >> 27)
        self._state = s
        return (s * _XORSHIFT_MULT) & _MASK64

    def next_float(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def next_below(self, n: int) -> int:
        """Exactly uniform integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (2 ** 64 // n) * n
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def sample_without_replacement(self, items: list, k: int) -> list:
        """First k entries of a partial Fisher-Yates shuffle of ``items``.

        The input list is consumed as working storage; pass a copy if the
        caller still needs it. Draw order: one ``next_below(len - i)`` per
        selected position i.
        """
        if k > len(items):
            raise ValueError("sample larger than population")
        for i in range(k):
            j = i + self.next_below(len(items) - i)
            items[i], items[j] = items[j], items[i]
        return items[:k]
