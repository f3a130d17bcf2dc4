"""Deterministic, splittable random streams.

Each :class:`RngStream` wraps a Philox counter-based generator keyed by the
pair ``(master_seed, stream_index)``. Two streams with different keys walk
disjoint counter spaces, so Monte-Carlo chunks can be generated in any order
or in parallel and still reproduce bit for bit.
"""
from __future__ import annotations

import numpy as np

__all__ = ["RngStream", "derive_index"]

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_index(parent: int, k: int) -> int:
    """Child stream index for substream ``k`` of stream ``parent``."""
    return _splitmix64(_splitmix64(parent & _MASK64) ^ (k & _MASK64))


class RngStream:
    """A reproducible random stream identified by ``(master_seed, stream_index)``.

    Parameters
    ----------
    master_seed : int
        64-bit experiment seed.
    stream_index : int, optional
        64-bit stream identifier. Top-level streams are built directly as
        ``RngStream(seed, k)``; :meth:`substream` hashes the parent index.
    """

    def __init__(self, master_seed: int, stream_index: int = 0) -> None:
        if not 0 <= master_seed <= _MASK64:
            raise ValueError(f"master_seed must fit in 64 bits, got {master_seed}")
        if not 0 <= stream_index <= _MASK64:
            raise ValueError(f"stream_index must fit in 64 bits, got {stream_index}")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        key = np.array([self.master_seed, self.stream_index], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index})"

    def substream(self, k: int) -> "RngStream":
        """Independent child stream number ``k``.

        Creating children does not consume anything from this stream.
        """
        return RngStream(self.master_seed, derive_index(self.stream_index, k))

    def uniform(self, size) -> np.ndarray:
        """Uniform doubles on [0, 1)."""
        return self._gen.random(size)

    def standard_complex_gaussian(self, size) -> np.ndarray:
        """CN(0, 1) samples via Box-Muller (real and imaginary variance 1/2 each)."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        u = self._gen.random(2 * n)
        r = np.sqrt(-np.log1p(-u[:n]))  # 1 - u lies in (0, 1]
        theta = 2.0 * np.pi * u[n:]
        return (r * np.cos(theta) + 1j * (r * np.sin(theta))).reshape(shape)

    def standard_normal(self, size) -> np.ndarray:
        """Real N(0, 1) samples, Box-Muller based."""
        z = self.standard_complex_gaussian(size)
        return np.sqrt(2.0) * z.real

    def uniform_message(self, m: int, size=None):
        """Messages drawn uniformly from ``{0, ..., m-1}``."""
        if m < 2:
            raise ValueError(f"message alphabet size must be >= 2, got {m}")
        return self._gen.integers(0, m, size=size)
