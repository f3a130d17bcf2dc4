"""Classical transceivers: Alamouti open loop, SVD closed loop, ZF multi-user.

Each scheme exposes a vectorized round trip and a small callable class
(``scheme(n_blocks, n0, stream) -> (sent, detected)``) that the SER harness
in :mod:`mimo_ae.ser` drives.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import constellation as cst
from .channel import add_noise, sample_channels
from .linalg import InvalidInputError, hermitian, pseudo_inverse, svd_batch
from .rng import RngStream

__all__ = [
    "DegenerateChannelError",
    "InfeasibleAllocationError",
    "Allocation",
    "alamouti_encode",
    "alamouti_ml_detect",
    "allocation_candidates",
    "solve_allocation",
    "solve_allocation_batch",
    "svd_transceiver_roundtrip",
    "zf_precoder",
    "zf_transceiver_roundtrip",
    "AlamoutiScheme",
    "AwgnScheme",
    "SvdScheme",
    "ZfScheme",
]

DEFAULT_CATALOG = ("trivial1", "bpsk", "qpsk", "qam8", "qam16")
POWER_GRID = 100


class DegenerateChannelError(ValueError):
    """Channel carries no energy (e.g. all-zero vector)."""


class InfeasibleAllocationError(ValueError):
    """No product of catalog sizes equals the message alphabet size."""


# --------------------------------------------------------------------------
# Alamouti
# --------------------------------------------------------------------------


def alamouti_encode(s1, s2, c: cst.Constellation, p_t: float = 1.0) -> np.ndarray:
    """Alamouti codeword ``sqrt(p_t/2) [[s1, -s2*], [s2, s1*]]``.

    Rows are antennas, columns are time slots. Label arrays broadcast; the
    result has shape ``labels.shape + (2, 2)``.
    """
    a = c.modulate(s1)
    b = c.modulate(s2)
    x = np.empty(np.broadcast(a, b).shape + (2, 2), dtype=np.complex128)
    x[..., 0, 0] = a
    x[..., 1, 0] = b
    x[..., 0, 1] = -np.conj(b)
    x[..., 1, 1] = np.conj(a)
    return np.sqrt(p_t / 2.0) * x


def alamouti_ml_detect(y, h, c: cst.Constellation, p_t: float = 1.0, n0: float = 1.0):
    """Joint ML detection of an Alamouti block via linear combining.

    Parameters
    ----------
    y : array, shape (..., 1, 2)
        Observations over the two slots.
    h : array, shape (..., 1, 2)
        Channel row ``[h1, h2]``.

    Returns
    -------
    (labels1, labels2)
    """
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if y.shape[-2:] != (1, 2) or h.shape[-2:] != (1, 2):
        raise InvalidInputError("Alamouti detection expects 1x2 observation and channel")
    y1, y2 = y[..., 0, 0], y[..., 0, 1]
    h1, h2 = h[..., 0, 0], h[..., 0, 1]
    hn2 = np.abs(h1) ** 2 + np.abs(h2) ** 2
    if np.any(hn2 == 0):
        raise DegenerateChannelError("channel vector is zero")
    z1 = np.conj(h1) * y1 + h2 * np.conj(y2)
    z2 = np.conj(h2) * y1 - h1 * np.conj(y2)
    gain = np.sqrt(p_t / 2.0) * hn2
    return cst.detect(c, z1, gain, n0), cst.detect(c, z2, gain, n0)


class AlamoutiScheme:
    """2x1 Alamouti with ML detection; two messages per block."""

    symbols_per_block = 2
    name = "alamouti"

    def __init__(self, c: cst.Constellation, p_t: float = 1.0):
        self.constellation = c
        self.p_t = p_t

    def __call__(self, n: int, n0: float, stream: RngStream):
        c = self.constellation
        msgs = stream.substream(0).uniform_message(c.size, (n, 2))
        h = sample_channels(stream.substream(1), n, 1, 2)
        x = alamouti_encode(msgs[:, 0], msgs[:, 1], c, self.p_t)
        y = add_noise(h @ x, n0, stream.substream(2))
        d1, d2 = alamouti_ml_detect(y, h, c, self.p_t, n0)
        return msgs, np.stack([d1, d2], axis=1)


# --------------------------------------------------------------------------
# SVD with bit and power allocation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Allocation:
    """Per-stream constellation choice and power."""

    constellations: tuple[str, ...]
    powers: tuple[float, ...]
    objective: float

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(cst.build(k).size for k in self.constellations)


@lru_cache(maxsize=32)
def allocation_candidates(m: int, n_streams: int, catalog: tuple[str, ...] = DEFAULT_CATALOG, grid: int = POWER_GRID):
    """Enumerate feasible (sizes, power-grid) pairs in tie-break order.

    Returns ``(names, fractions)`` where ``names`` is a tuple of per-candidate
    constellation-name tuples and ``fractions`` an array of shape
    ``(n_candidates, n_streams)`` with power fractions of ``p_t``.
    Size tuples run in lexicographic order; within one, grid vectors
    ``(k_1, ..., k_R)`` with ``sum k = grid`` run in lexicographic order.
    A stream with a single-point constellation gets zero power.
    """
    by_size = {}
    for name in catalog:
        by_size.setdefault(cst.build(name).size, name)
    sizes = sorted(by_size)
    factorizations = [f for f in itertools.product(sizes, repeat=n_streams) if int(np.prod(f)) == m]
    if not factorizations:
        raise InfeasibleAllocationError(f"no product of sizes {sizes} over {n_streams} streams equals {m}")
    grids = [g for g in itertools.product(range(grid + 1), repeat=n_streams) if sum(g) == grid]
    names, fracs = [], []
    for f in factorizations:
        active = [s > 1 for s in f]
        for g in grids:
            if any(k > 0 and not a for k, a in zip(g, active)):
                continue
            names.append(tuple(by_size[s] for s in f))
            fracs.append([k / grid for k in g])
    if not names and m == 1:
        names, fracs = [tuple(by_size[1] for _ in range(n_streams))], [[0.0] * n_streams]
    return tuple(names), np.array(fracs, dtype=np.float64)


def _log_success(names, fracs, sigma, p_t, n0, grid):
    """``sum_i log(1 - Pe_i)`` for every sample x candidate, shape (n, n_candidates).

    Working in logs keeps candidates distinguishable when every error
    probability is far below machine epsilon.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    n, n_streams = sigma.shape
    snr = p_t / n0 if n0 > 0 else np.inf
    levels = np.arange(grid + 1) / grid
    uniq = sorted({nm for cand in names for nm in cand})
    col_of = {nm: j for j, nm in enumerate(uniq)}
    kidx = np.rint(fracs * grid).astype(np.int64)
    total = np.zeros((n, len(names)))
    for i in range(n_streams):
        with np.errstate(invalid="ignore"):
            gamma = sigma[:, i : i + 1] ** 2 * levels[None, :] * snr
        gamma[:, 0] = 0.0
        table = np.empty((n, len(uniq), grid + 1))
        for j, nm in enumerate(uniq):
            table[:, j, :] = np.log1p(-cst.ser_analytic(cst.build(nm), gamma))
        cidx = np.array([col_of[cand[i]] for cand in names])
        total += table[:, cidx, kidx[:, i]]
    return total


def solve_allocation_batch(sigma, p_t: float, n0: float, m: int = 16, catalog=DEFAULT_CATALOG, grid: int = POWER_GRID):
    """Exhaustive bit and power allocation for a batch of singular-value vectors.

    Returns ``(candidate_index, names, fractions, objective)``; ``candidate_index``
    has shape (n,) and indexes ``names``/``fractions``; ``objective`` is the
    success probability ``prod(1 - Pe_i)`` of the chosen candidate.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    names, fracs = allocation_candidates(m, sigma.shape[1], tuple(catalog), grid)
    score = _log_success(names, fracs, sigma, p_t, n0, grid)
    best = np.argmax(score, axis=1)  # first maximum wins
    return best, names, fracs, np.exp(score[np.arange(len(best)), best])


def solve_allocation(sigma, p_t: float, n0: float, catalog=DEFAULT_CATALOG, m: int = 16, grid: int = POWER_GRID) -> Allocation:
    """Maximize the probability that every stream is detected correctly.

    ``sigma`` holds the singular values of one channel, descending. Stream
    ``i`` sees SNR ``sigma_i^2 P_i / n0``.

    Examples
    --------
    >>> a = solve_allocation([2.0, 0.001], 1.0, 10 ** -1.5)
    >>> a.constellations, a.powers
    (('qam16', 'trivial1'), (1.0, 0.0))
    """
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    if sigma.size == 0:
        raise InvalidInputError("sigma must be non-empty")
    if np.any(np.diff(sigma) > 0):
        raise InvalidInputError("sigma must be descending")
    best, names, fracs, obj = solve_allocation_batch(sigma[None, :], p_t, n0, m, catalog, grid)
    b = int(best[0])
    return Allocation(names[b], tuple(float(f * p_t) for f in fracs[b]), float(obj[0]))


def _split_message(msgs, sizes):
    """Mixed-radix split, first stream most significant. sizes: (n, R)."""
    labels = np.empty(sizes.shape, dtype=np.int64)
    rest = np.asarray(msgs, dtype=np.int64).copy()
    for i in range(sizes.shape[1] - 1, -1, -1):
        labels[:, i] = rest % sizes[:, i]
        rest //= sizes[:, i]
    return labels


def _join_message(labels, sizes):
    out = np.zeros(labels.shape[0], dtype=np.int64)
    for i in range(sizes.shape[1]):
        out = out * sizes[:, i] + labels[:, i]
    return out


def svd_transceiver_roundtrip(
    h,
    messages,
    allocation="alloc",
    p_t: float = 1.0,
    n0: float = 1.0,
    stream: RngStream | None = None,
    m: int = 16,
    catalog=DEFAULT_CATALOG,
    grid: int = POWER_GRID,
):
    """Precode with ``V``, combine with ``U^H``, detect every stream by ML.

    Parameters
    ----------
    h : array, shape (n, n_r, n_t)
    messages : int array, shape (n,)
    allocation : ``"alloc"``, ``"equal-qpsk"`` or an :class:`Allocation`
        ``"alloc"`` solves the allocation per realization; ``"equal-qpsk"``
        puts QPSK on every stream with equal power; an ``Allocation`` is
        applied to every realization as given.

    Returns
    -------
    detected messages, shape (n,)
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim == 2:
        h = h[None]
    msgs = np.asarray(messages, dtype=np.int64).reshape(-1)
    n = h.shape[0]
    if msgs.shape[0] != n:
        raise InvalidInputError("one message per channel realization expected")
    u, s, v = svd_batch(h)
    r = s.shape[1]
    if isinstance(allocation, Allocation):
        if len(allocation.constellations) != r:
            raise InvalidInputError(f"allocation has {len(allocation.constellations)} streams, channel has {r}")
        names = allocation.constellations
        cons = [cst.build(k) for k in names]
        sizes = np.tile([c.size for c in cons], (n, 1))
        powers = np.tile(allocation.powers, (n, 1))
        cand = np.zeros(n, dtype=np.int64)
        cand_names = (names,)
    elif allocation == "equal-qpsk":
        if m != 4**r:
            raise InvalidInputError(f"equal-power QPSK over {r} streams carries {4 ** r} messages, not {m}")
        cand_names = (("qpsk",) * r,)
        cand = np.zeros(n, dtype=np.int64)
        sizes = np.full((n, r), 4)
        powers = np.full((n, r), p_t / r)
    elif allocation == "alloc":
        cand, cand_names, fracs, _ = solve_allocation_batch(s, p_t, n0, m, catalog, grid)
        sizes = np.array([[cst.build(k).size for k in nm] for nm in cand_names])[cand]
        powers = fracs[cand] * p_t
    else:
        raise InvalidInputError(f"unknown allocation {allocation!r}")
    if np.any(msgs < 0) or np.any(msgs >= m):
        raise InvalidInputError("message out of range")

    labels = _split_message(msgs, sizes)
    sym = np.zeros((n, r), dtype=np.complex128)
    det = np.zeros((n, r), dtype=np.int64)
    cache = {}
    for ci, nm in enumerate(cand_names):
        rows = np.nonzero(cand == ci)[0]
        if rows.size == 0:
            continue
        for i, name in enumerate(nm):
            c = cache.setdefault(name, cst.build(name))
            sym[rows, i] = np.sqrt(powers[rows, i]) * c.points[labels[rows, i]]
    x = v @ sym[:, :, None]
    if stream is None and n0 > 0:
        raise InvalidInputError("a random stream is required when n0 > 0")
    y = add_noise(h @ x, n0, stream) if n0 > 0 else h @ x
    yhat = (hermitian(u) @ y)[:, :, 0]
    for ci, nm in enumerate(cand_names):
        rows = np.nonzero(cand == ci)[0]
        if rows.size == 0:
            continue
        for i, name in enumerate(nm):
            c = cache[name]
            det[rows, i] = cst.detect(c, yhat[rows, i], s[rows, i] * np.sqrt(powers[rows, i]), n0)
    return _join_message(det, sizes)


class SvdScheme:
    """Closed-loop SVD transceiver over an i.i.d. Rayleigh ``n_r x n_t`` channel."""

    symbols_per_block = 1

    def __init__(self, m: int = 16, allocation="alloc", n_r: int = 2, n_t: int = 2, p_t: float = 1.0, catalog=DEFAULT_CATALOG, grid: int = POWER_GRID):
        self.m, self.allocation = m, allocation
        self.n_r, self.n_t, self.p_t = n_r, n_t, p_t
        self.catalog, self.grid = tuple(catalog), grid
        self.name = "svd-alloc" if allocation == "alloc" else "svd"
        if allocation == "alloc":
            allocation_candidates(m, min(n_r, n_t), self.catalog, grid)

    def __call__(self, n: int, n0: float, stream: RngStream):
        msgs = stream.substream(0).uniform_message(self.m, n)
        h = sample_channels(stream.substream(1), n, self.n_r, self.n_t)
        det = svd_transceiver_roundtrip(
            h, msgs, self.allocation, self.p_t, n0, stream.substream(2), self.m, self.catalog, self.grid
        )
        return msgs[:, None], det[:, None]


# --------------------------------------------------------------------------
# Zero-forcing multi-user precoding
# --------------------------------------------------------------------------


def zf_precoder(h, p_t: float = 1.0):
    """Return ``(alpha, H_pinv)`` with ``alpha = sqrt(p_t) / ||H_pinv||_F`` per realization."""
    hp = pseudo_inverse(h)
    fro = np.sqrt(np.sum(np.abs(hp) ** 2, axis=(-2, -1)))
    return np.sqrt(p_t) / fro, hp


def zf_transceiver_roundtrip(h, messages, c: cst.Constellation, p_t: float = 1.0, n0: float = 1.0, stream: RngStream | None = None):
    """Zero-forcing downlink: ``x = alpha H^+ s``; user ``i`` sees ``alpha s_i + n_i``.

    Parameters
    ----------
    h : array, shape (n, n_users, n_t)
    messages : int array, shape (n, n_users)

    Returns
    -------
    detected labels, shape (n, n_users)
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim == 2:
        h = h[None]
    msgs = np.asarray(messages, dtype=np.int64).reshape(h.shape[0], h.shape[1])
    alpha, hp = zf_precoder(h, p_t)
    s = c.modulate(msgs)
    x = alpha[:, None, None] * (hp @ s[:, :, None])
    y = h @ x
    if n0 > 0:
        if stream is None:
            raise InvalidInputError("a random stream is required when n0 > 0")
        y = add_noise(y, n0, stream)
    return cst.detect(c, y[:, :, 0], alpha[:, None], n0)


class ZfScheme:
    """ZF precoding to ``n_users`` single-antenna users; one message per user."""

    name = "zf"

    def __init__(self, c: cst.Constellation, n_users: int = 2, n_t: int = 2, p_t: float = 1.0):
        if n_t < n_users:
            raise InvalidInputError("ZF needs n_t >= number of users")
        self.constellation = c
        self.n_users, self.n_t, self.p_t = n_users, n_t, p_t
        self.symbols_per_block = n_users

    def __call__(self, n: int, n0: float, stream: RngStream):
        c = self.constellation
        msgs = stream.substream(0).uniform_message(c.size, (n, self.n_users))
        h = sample_channels(stream.substream(1), n, self.n_users, self.n_t)
        return msgs, zf_transceiver_roundtrip(h, msgs, c, self.p_t, n0, stream.substream(2))


class AwgnScheme:
    """Single-antenna constellation over AWGN (reference for the SISO autoencoder)."""

    symbols_per_block = 1

    def __init__(self, c: cst.Constellation, p_t: float = 1.0):
        self.constellation = c
        self.p_t = p_t
        self.name = f"awgn-{c.name}"

    def __call__(self, n: int, n0: float, stream: RngStream):
        c = self.constellation
        msgs = stream.substream(0).uniform_message(c.size, n)
        y = np.sqrt(self.p_t) * c.modulate(msgs)
        y = add_noise(y, n0, stream.substream(2))
        return msgs[:, None], cst.detect(c, y, np.sqrt(self.p_t), n0)[:, None]
