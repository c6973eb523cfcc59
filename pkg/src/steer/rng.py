"""Seeded 64-bit generator used by every sampling decision.

The generator is xoshiro256** (Blackman & Vigna, 2018). State is seeded from a
64-bit seed by four successive splitmix64 outputs. Floats in [0, 1) take the top
53 bits of the next output. Per-example streams are derived with
:func:`derive_seed`, which is splitmix64's finaliser applied to
``seed + (index + 1) * 0x9E3779B97F4A7C15 (mod 2**64)``.

Everything here is plain integer arithmetic so that another implementation can
reproduce a generation run bit for bit from these definitions alone.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix64(state):
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + GOLDEN) & MASK64
    return state, _mix64(state)


def derive_seed(seed, index):
    """Independent stream seed for ``index`` under master ``seed``."""
    if index < 0:
        raise ValueError("index must be non-negative")
    return _mix64((seed + (index + 1) * GOLDEN) & MASK64)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** with splitmix64 seeding."""

    __slots__ = ("_s",)

    def __init__(self, seed):
        seed &= MASK64
        s = []
        for _ in range(4):
            seed, out = splitmix64(seed)
            s.append(out)
        self._s = s

    def next_u64(self):
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self):
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n):
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def sample_indices(self, n, k):
        """``min(k, n)`` distinct indices from ``range(n)`` via partial Fisher-Yates."""
        k = min(k, n)
        pool = list(range(n))
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def getstate(self):
        return tuple(self._s)
