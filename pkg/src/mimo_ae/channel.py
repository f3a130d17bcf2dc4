"""Rayleigh block fading, AWGN and SNR bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import InvalidInputError
from .rng import RngStream

__all__ = ["ChannelRealization", "NoiseConfig", "sample_channel", "sample_channels", "apply", "add_noise", "snr_db_to_n0"]


@dataclass(frozen=True)
class ChannelRealization:
    """Channel matrix ``h`` (n_r x n_t) held constant for ``block_length`` slots."""

    h: np.ndarray
    block_length: int = 1

    @property
    def n_r(self) -> int:
        return self.h.shape[-2]

    @property
    def n_t(self) -> int:
        return self.h.shape[-1]


@dataclass(frozen=True)
class NoiseConfig:
    """Noise power per complex dimension. ``n0 = 0`` is the noiseless mode."""

    n0: float
    p_t: float = 1.0

    def __post_init__(self):
        if self.n0 < 0 or not np.isfinite(self.n0):
            raise InvalidInputError(f"n0 must be finite and >= 0, got {self.n0}")
        if self.p_t <= 0:
            raise InvalidInputError(f"p_t must be > 0, got {self.p_t}")

    @classmethod
    def from_snr_db(cls, snr_db: float, p_t: float = 1.0) -> "NoiseConfig":
        return cls(n0=snr_db_to_n0(snr_db, p_t), p_t=p_t)

    @property
    def snr_db(self) -> float:
        return float("inf") if self.n0 == 0 else 10.0 * np.log10(self.p_t / self.n0)


def snr_db_to_n0(snr_db: float, p_t: float = 1.0) -> float:
    """``N0 = P_T * 10**(-snr_db/10)``."""
    if p_t <= 0:
        raise InvalidInputError(f"p_t must be > 0, got {p_t}")
    return p_t * 10.0 ** (-snr_db / 10.0)


def sample_channel(stream: RngStream, n_r: int, n_t: int, block_length: int = 1) -> ChannelRealization:
    """One Rayleigh realization with i.i.d. CN(0, 1) entries."""
    if n_r < 1 or n_t < 1:
        raise InvalidInputError("n_r and n_t must be >= 1")
    return ChannelRealization(stream.standard_complex_gaussian((n_r, n_t)), block_length)


def sample_channels(stream: RngStream, batch: int, n_r: int, n_t: int) -> np.ndarray:
    """Stack of ``batch`` i.i.d. Rayleigh matrices, shape (batch, n_r, n_t)."""
    if n_r < 1 or n_t < 1:
        raise InvalidInputError("n_r and n_t must be >= 1")
    return stream.standard_complex_gaussian((batch, n_r, n_t))


def add_noise(y: np.ndarray, n0: float, stream: RngStream) -> np.ndarray:
    """Return ``y + n`` with ``n`` i.i.d. CN(0, n0)."""
    if n0 == 0:
        return np.array(y, dtype=np.complex128)
    return y + np.sqrt(n0) * stream.standard_complex_gaussian(np.shape(y))


def apply(h, x, noise: NoiseConfig | float, stream: RngStream) -> np.ndarray:
    """Receive ``Y = H X + N`` for one realization or a batch.

    ``h`` may be a :class:`ChannelRealization` or an array of shape
    ``(..., n_r, n_t)``; ``x`` has shape ``(..., n_t, n_slots)``.
    """
    if isinstance(h, ChannelRealization):
        block = h.block_length
        h = h.h
    else:
        block = None
    h = np.asarray(h, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim < 2 or x.shape[-2] != h.shape[-1]:
        raise InvalidInputError(f"x must have {h.shape[-1]} rows, got shape {x.shape}")
    if block is not None and x.shape[-1] > block:
        raise InvalidInputError(f"x spans {x.shape[-1]} slots, block length is {block}")
    n0 = noise.n0 if isinstance(noise, NoiseConfig) else float(noise)
    return add_noise(h @ x, n0, stream)
