"""Deterministic random number generation shared by the corpus generators.

Every synthetic pixel in the system comes from one fixed generator
(xorshift64*), so corpora built from the same seed are bit-identical across
machines, runs, and reimplementations in other languages.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D
# Substitute state for seed 0 (xorshift state must be nonzero).
_ZERO_SEED_STATE = 0x9E3779B97F4A7C15


class XorShift64Star:
    """xorshift64* generator (Vigna's variant: shifts 12/25/27, odd multiplier)."""

    def __init__(self, seed: int):
        state = seed & _MASK64
        self._state = state if state != 0 else _ZERO_SEED_STATE

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> 12
        s = (s ^ (s << 25)) & _MASK64
        s ^= s >> 27
        self._state = s
        return (s * _MULT) & _MASK64

    def next_int(self, lo: int, hi: int) -> int:
        """Integer uniform on [lo, hi] inclusive (modulo bias < 2**-57 here)."""
        span = hi - lo + 1
        return lo + self.next_u64() % span

    def next_unit(self) -> float:
        """Float uniform on [0, 1)."""
        return self.next_u64() / 2.0**64

    def next_gauss(self) -> float:
        """Standard-normal approximation: sum of 12 uniforms minus 6 (CLT)."""
        return sum(self.next_unit() for _ in range(12)) - 6.0

    def u64_block(self, count: int) -> list[int]:
        """The next `count` raw outputs, identical to repeated next_u64()."""
        s = self._state
        out = [0] * count
        for i in range(count):
            s ^= s >> 12
            s = (s ^ (s << 25)) & _MASK64
            s ^= s >> 27
            out[i] = (s * _MULT) & _MASK64
        self._state = s
        return out

    def int_block(self, count: int, lo: int, hi: int) -> list[int]:
        """The next `count` integers uniform on [lo, hi], as next_int()."""
        span = hi - lo + 1
        return [lo + v % span for v in self.u64_block(count)]

    def gauss_block(self, count: int):
        """The next `count` CLT normals, identical to repeated next_gauss().

        Summation runs left to right over the 12 draws per sample, matching
        the scalar path bit for bit. Returns a float64 numpy array.
        """
        import numpy as np

        raw = np.array(self.u64_block(count * 12), dtype=np.uint64)
        units = raw.astype(np.float64) / 2.0**64
        units = units.reshape(count, 12)
        acc = units[:, 0].copy()
        for j in range(1, 12):
            acc += units[:, j]
        return acc - 6.0


def derive_seed(base: int, *indices: int) -> int:
    """Derive a child seed from a base seed and an index path.

    splitmix64-style mixing; children of distinct paths are uncorrelated.
    """
    s = base & _MASK64
    for idx in indices:
        s = (s + 0x9E3779B97F4A7C15 + (idx & _MASK64)) & _MASK64
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        s = z ^ (z >> 31)
    return s
