"""Deterministic, splittable random-number streams.

Every stochastic choice in the simulator draws from a stream derived from
``(master_seed, purpose_tag, index_a, index_b)``. Streams with different
derivation tuples are independent, and the same tuple always yields the
same sequence, so results cannot depend on evaluation order, thread count,
or logging cadence.

The generator is counter-based: output ``i`` is a SplitMix64 mix of
``seed + i * golden``, which has full 2^64 period and needs no warm-up.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / (1 << 53)


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, tag: str, a: int = 0, b: int = 0) -> int:
    """Collision-resistant 64-bit seed for the tuple (master, tag, a, b)."""
    h = hashlib.blake2b(digest_size=8)
    h.update((master & _MASK64).to_bytes(8, "little"))
    h.update(tag.encode("utf-8"))
    h.update(b"\x00")
    h.update((a & _MASK64).to_bytes(8, "little"))
    h.update((b & _MASK64).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Counter-based PRNG owned by a single logical task."""

    __slots__ = ("seed", "_counter", "_spare_normal")

    def __init__(self, seed: int) -> None:
        self.seed = seed & _MASK64
        self._counter = 0
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._counter += 1
        return _mix64((self.seed + self._counter * _GOLDEN) & _MASK64)

    def uniform(self) -> float:
        """Uniform real in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform_open(self) -> float:
        """Uniform real in (0, 1]; safe as a log argument."""
        return ((self.next_u64() >> 11) + 1) * _INV_2_53

    def uniforms(self, n: int) -> np.ndarray:
        return np.fromiter((self.uniform() for _ in range(n)), dtype=np.float64, count=n)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection."""
        if n <= 0:
            raise ValueError(f"below() requires n >= 1, got {n}")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def normal(self) -> float:
        """Standard normal draw (Box-Muller, with the sine mate cached)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = self.uniform_open()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> np.ndarray:
        return np.fromiter((self.normal() for _ in range(n)), dtype=np.float64, count=n)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        arr = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            arr[i], arr[j] = arr[j], arr[i]
        return np.asarray(arr, dtype=np.int64)

    def choose(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), uniform without replacement."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot choose {k} of {n}")
        arr = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            arr[i], arr[j] = arr[j], arr[i]
        return arr[:k]

    def gamma(self, shape: float) -> float:
        """Gamma(shape, 1) draw via the Marsaglia-Tsang squeeze method.

        Shapes below 1 use the boost: draw Gamma(shape+1) and multiply by
        U^(1/shape).
        """
        if shape <= 0.0:
            raise ValueError(f"gamma shape must be positive, got {shape}")
        if shape < 1.0:
            return self.gamma(shape + 1.0) * self.uniform_open() ** (1.0 / shape)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = self.uniform_open()
            if u < 1.0 - 0.0331 * x * x * x * x:
                return d * v
            if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                return d * v

    def dirichlet(self, alphas: np.ndarray) -> np.ndarray:
        """Dirichlet draw via normalized Gamma(alpha_i, 1) variates.

        An all-zero gamma vector (probability zero, numerically possible
        for tiny alphas) triggers a resample.
        """
        alphas = np.asarray(alphas, dtype=np.float64)
        while True:
            g = np.fromiter((self.gamma(a) for a in alphas), dtype=np.float64, count=len(alphas))
            total = g.sum()
            if total > 0.0:
                return g / total


def derive(master: int, tag: str, a: int = 0, b: int = 0) -> RngStream:
    """Independent stream for the derivation tuple (master, tag, a, b)."""
    return RngStream(derive_seed(master, tag, a, b))
