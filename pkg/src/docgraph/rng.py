"""Seed-deterministic PRNG used for splits and synthetic data.

The generator is xorshift64* seeded through splitmix64, so fixture files
are reproducible bit-for-bit regardless of platform or numpy version.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class XorShift64Star:
    """xorshift64* stream; the seed is stretched with splitmix64 so that
    small consecutive seeds give unrelated streams."""

    def __init__(self, seed: int):
        state, z = _splitmix64(seed & _MASK64)
        self._s = z if z != 0 else 0x106689D45497FDB5

    def next_u64(self) -> int:
        s = self._s
        s ^= (s >> 12) & _MASK64
        s = (s ^ (s << 25)) & _MASK64
        s ^= s >> 27
        self._s = s
        return (s * 0x2545F4914F6CDD1D) & _MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Uses rejection to avoid modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % n

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items: list):
        return items[self.randint(len(items))]
