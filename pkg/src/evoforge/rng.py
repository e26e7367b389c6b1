"""Counter-based random streams.

A stream's entire state is three 64-bit integers (seed, stream_id,
counter), so checkpoints are trivial and any draw can be replayed
without regenerating the whole sequence.  Draw ``i`` of a stream is a
pure function of (seed, stream_id, i): the SplitMix64 output function
applied to a per-stream base plus the golden-ratio increment.

Streams are single-owner: never share one across threads.  Independent
work (a job, a validity check) gets its own stream via :meth:`RngStream.split`
or by constructing a stream keyed to a stable 64-bit identity.
"""

from __future__ import annotations

import hashlib
import math
from typing import Sequence

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a 64-bit avalanche permutation."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _stream_base(seed: int, stream_id: int) -> int:
    return mix64(mix64(seed) ^ (stream_id & _MASK64))


def stable_hash64(data: str | bytes) -> int:
    """Process-independent 64-bit hash (unlike builtin hash, never salted)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")


def word_at(seed: int, stream_id: int, index: int) -> int:
    """Draw `index` of stream (seed, stream_id) without constructing it."""
    return mix64((_stream_base(seed, stream_id) + (index + 1) * _GOLDEN) & _MASK64)


class RngStream:
    """Deterministic uniform source with fully serializable state."""

    __slots__ = ("seed", "stream_id", "counter")

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        self.seed = seed & _MASK64
        self.stream_id = stream_id & _MASK64
        self.counter = counter

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RngStream):
            return NotImplemented
        return (self.seed, self.stream_id, self.counter) == (
            other.seed,
            other.stream_id,
            other.counter,
        )

    def copy(self) -> RngStream:
        return RngStream(self.seed, self.stream_id, self.counter)

    def split(self, key: int) -> RngStream:
        """Derive an independent stream; deterministic in (self, key)."""
        return RngStream(self.seed, mix64(self.stream_id ^ mix64(key)), 0)

    # -- state ------------------------------------------------------------

    def state_dict(self) -> dict:
        return {"seed": self.seed, "stream_id": self.stream_id, "counter": self.counter}

    @classmethod
    def from_state_dict(cls, d: dict) -> RngStream:
        return cls(int(d["seed"]), int(d["stream_id"]), int(d["counter"]))

    # -- raw draws ---------------------------------------------------------

    def _word(self) -> int:
        base = _stream_base(self.seed, self.stream_id)
        w = mix64((base + (self.counter + 1) * _GOLDEN) & _MASK64)
        self.counter += 1
        return w

    def _words_array(self, n: int) -> np.ndarray:
        z = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        z *= np.uint64(_GOLDEN)
        z += np.uint64(_stream_base(self.seed, self.stream_id))
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
        self.counter += n
        return z

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return (self._word() >> 11) * _INV_2_53

    def uniform_array(self, n: int) -> np.ndarray:
        """n doubles in [0, 1); identical values to n scalar uniform() calls."""
        z = self._words_array(n)
        return (z >> np.uint64(11)).astype(np.float64) * _INV_2_53

    # -- derived draws -----------------------------------------------------

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller from two words; consumes exactly two counter slots."""
        u1 = ((self._word() >> 11) + 1) * _INV_2_53  # (0, 1]
        u2 = (self._word() >> 11) * _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        return mu + sigma * r * math.cos(2.0 * math.pi * u2)

    def normal_array(self, n: int, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        """n standard-ish normals; identical values to n scalar normal() calls."""
        z = self._words_array(2 * n)
        u1 = ((z[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (z[1::2] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        return mu + sigma * r * np.cos(2.0 * np.pi * u2)

    def randrange(self, n: int) -> int:
        """Integer in [0, n)."""
        if n <= 0:
            raise ValueError("randrange() requires n >= 1")
        return int(self.uniform() * n)

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi] inclusive."""
        return lo + self.randrange(hi - lo + 1)

    def choice(self, seq: Sequence):
        return seq[self.randrange(len(seq))]

    def weighted_index(self, weights: Sequence[float]) -> int:
        """Index drawn with probability proportional to its weight."""
        total = float(sum(weights))
        if total <= 0.0:
            raise ValueError("weighted_index() requires a positive total weight")
        x = self.uniform() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if x < acc:
                return i
        return len(weights) - 1

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), order random (partial Fisher-Yates)."""
        if not 0 <= k <= n:
            raise ValueError("sample_indices() requires 0 <= k <= n")
        pool = list(range(n))
        out = []
        for i in range(k):
            j = i + self.randrange(n - i)
            pool[i], pool[j] = pool[j], pool[i]
            out.append(pool[i])
        return out
