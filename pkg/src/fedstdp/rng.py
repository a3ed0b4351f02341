"""Deterministic random streams.

Every random draw in the package goes through :class:`SeededRng`, a
xoshiro256** generator whose 256-bit state is filled from the seed by
splitmix64.  Both algorithms are fully specified by a handful of constants,
so a seeded trial can be replayed bit-for-bit by any implementation:

* splitmix64: ``z += 0x9E3779B97F4A7C15``;
  ``z = (z ^ z>>30) * 0xBF58476D1CE4E5B9``;
  ``z = (z ^ z>>27) * 0x94D049BB133111EB``; output ``z ^ z>>31``.
* xoshiro256**: output ``rotl(s1 * 5, 7) * 9``, then the standard
  shift/xor/rotate(45) state transition.

Derived values:

* ``random()``: ``(x >> 11) * 2**-53``, uniform on [0, 1).
* ``below(n)``: ``((x >> 11) * n) >> 53``, i.e. ``floor(random() * n)``
  computed exactly.  Bias is below ``n / 2**53`` and ignored.
* ``normal pairs``: Box-Muller on ``u1 = 1 - random()``, ``u2 = random()``,
  both outputs used (cosine first).
* ``derive(*labels)``: child seed ``mix(seed ^ mix(fnv1a64(label)))`` per
  label, where ``mix`` is the splitmix64 output function.  Derivation only
  looks at the seed, never at how many draws were consumed.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_TWO_PI = 2.0 * math.pi


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns ``(new_state, output)``."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def mix64(x: int) -> int:
    return splitmix64(x & MASK64)[1]


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def derive_seed(seed: int, *labels) -> int:
    s = seed & MASK64
    for label in labels:
        s = mix64(s ^ mix64(fnv1a64(str(label).encode("utf-8"))))
    return s


class SeededRng:
    """xoshiro256** stream with splitmix64 seeding.

    Single-owner: do not share one instance between threads.  Use
    :meth:`fork` or :meth:`derive` to hand out independent streams.
    """

    __slots__ = ("seed", "_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        sm = self.seed
        state = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            state.append(out)
        self._s0, self._s1, self._s2, self._s3 = state

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"

    @classmethod
    def from_state(cls, s0: int, s1: int, s2: int, s3: int) -> "SeededRng":
        rng = cls(0)
        rng._s0, rng._s1, rng._s2, rng._s3 = s0, s1, s2, s3
        return rng

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        r = (s1 * 5) & MASK64
        r = ((((r << 7) | (r >> 57)) & MASK64) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return r

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        return ((self.next_u64() >> 11) * n) >> 53

    def uniform(self, lo: float, hi: float, size: int) -> np.ndarray:
        return np.array([lo + (hi - lo) * self.random() for _ in range(size)])

    def normals(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        i = 0
        while i < size:
            u1 = 1.0 - self.random()
            u2 = self.random()
            r = math.sqrt(-2.0 * math.log(u1))
            out[i] = r * math.cos(_TWO_PI * u2)
            if i + 1 < size:
                out[i + 1] = r * math.sin(_TWO_PI * u2)
            i += 2
        return out

    def permutation(self, n: int) -> np.ndarray:
        # Fisher-Yates from the top; j drawn from [0, i].
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)

    def sample(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct integers from ``range(n)`` (partial Fisher-Yates)."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} distinct values from {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.array(pool[:k], dtype=np.int64)

    def derive(self, *labels) -> "SeededRng":
        return SeededRng(derive_seed(self.seed, *labels))

    def fork(self) -> "SeededRng":
        """Child stream seeded from this stream's next draw."""
        return SeededRng(self.next_u64())

    def substreams(self, count: int, label="substream") -> "StreamBank":
        return StreamBank([derive_seed(self.seed, label, i) for i in range(count)])


class StreamBank:
    """``k`` independent xoshiro256** streams advanced in lockstep.

    Stream ``i`` produces exactly the sequence ``SeededRng(seeds[i])`` would;
    the bank only vectorizes the arithmetic.
    """

    def __init__(self, seeds):
        rows = []
        for s in seeds:
            g = SeededRng(s)
            rows.append([g._s0, g._s1, g._s2, g._s3])
        states = np.array(rows, dtype=np.uint64).reshape(-1, 4)
        self._s = [states[:, i].copy() for i in range(4)]

    def __len__(self):
        return self._s[0].shape[0]

    def next_u64(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        with np.errstate(over="ignore"):
            r = s1 * np.uint64(5)
            r = ((r << np.uint64(7)) | (r >> np.uint64(57))) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self._s[3] = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
        return r

    def below(self, n: int) -> np.ndarray:
        # floor(((x >> 11) * n) / 2**53) split into 26/27-bit halves so the
        # products fit in uint64 for n < 2**32.
        if not 0 < n < (1 << 32):
            raise ValueError("StreamBank.below needs 0 < n < 2**32")
        a = self.next_u64() >> np.uint64(11)
        nn = np.uint64(n)
        hi = a >> np.uint64(26)
        lo = a & np.uint64((1 << 26) - 1)
        return ((hi * nn + ((lo * nn) >> np.uint64(26))) >> np.uint64(27)).astype(np.int64)
