"""Monte-Carlo symbol error rate over SNR sweeps.

A *transceiver* is any callable ``scheme(n_blocks, n0, stream) -> (sent, detected)``
returning integer arrays of shape ``(n_blocks, symbols_per_block)``. Every
message decision counts as one symbol.

Work is split into chunks of a fixed number of blocks, chunk ``k`` of a point
drawing from ``stream.substream(k)``. The stopping rule is applied in chunk
order, so results do not depend on how many threads evaluate the chunks.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import snr_db_to_n0
from .linalg import InvalidInputError
from .rng import RngStream

__all__ = [
    "EVAL_STREAM",
    "StoppingRule",
    "SerPoint",
    "SerCurve",
    "ser_point",
    "ser_sweep",
    "snr_grid",
    "binomial_sigma",
    "write_csv",
    "read_csv",
    "write_combined_csv",
]

EVAL_STREAM = 3
CSV_HEADER = ("snr_db", "ser", "num_symbols", "num_errors")


@dataclass(frozen=True)
class StoppingRule:
    """Stop once ``min_errors`` errors or ``max_symbols`` symbols are reached."""

    min_errors: int = 100
    max_symbols: int = 10**7
    chunk_blocks: int = 10_000

    def __post_init__(self):
        if self.min_errors < 1 or self.max_symbols < 1 or self.chunk_blocks < 1:
            raise InvalidInputError("min_errors, max_symbols and chunk_blocks must be >= 1")


@dataclass(frozen=True)
class SerPoint:
    snr_db: float
    ser: float
    num_symbols: int
    num_errors: int
    errors_per_slot: tuple[int, ...] = ()

    @property
    def sigma(self) -> float:
        return binomial_sigma(self.ser, self.num_symbols)

    def slot_ser(self, slot: int) -> float:
        """SER of one message slot (e.g. one user)."""
        per_slot = self.num_symbols // len(self.errors_per_slot)
        return self.errors_per_slot[slot] / per_slot


@dataclass
class SerCurve:
    points: list[SerPoint] = field(default_factory=list)
    tag: str = ""
    seed: int = 0

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    @property
    def ser(self) -> np.ndarray:
        return np.array([p.ser for p in self.points])

    def per_slot(self, slot: int) -> "SerCurve":
        """Curve of one message slot (one user for multi-user systems)."""
        pts = []
        for p in self.points:
            per = p.num_symbols // len(p.errors_per_slot)
            e = p.errors_per_slot[slot]
            pts.append(SerPoint(p.snr_db, e / per, per, e))
        return SerCurve(pts, f"{self.tag}-user{slot}", self.seed)


def binomial_sigma(p: float, n: int) -> float:
    """Standard deviation of an error-rate estimate from ``n`` trials."""
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else float("inf")


def snr_grid(start: float = 0.0, stop: float = 24.0, step: float = 2.0) -> list[float]:
    """Inclusive grid ``start, start+step, ..., stop``."""
    if step <= 0:
        raise InvalidInputError("step must be > 0")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    if n < 1:
        raise InvalidInputError("empty SNR grid")
    return [round(start + i * step, 10) for i in range(n)]


def _run_chunk(transceiver, blocks, n0, stream):
    sent, det = transceiver(blocks, n0, stream)
    wrong = np.asarray(sent) != np.asarray(det)
    return wrong.size, np.count_nonzero(wrong, axis=0)


def ser_point(transceiver, snr_db: float, rule: StoppingRule = StoppingRule(), stream: RngStream | None = None, p_t: float = 1.0, threads: int = 1, n0: float | None = None) -> SerPoint:
    """Estimate the SER of ``transceiver`` at one SNR.

    ``n0`` overrides the SNR-derived noise power (``n0=0`` is noiseless).
    """
    if stream is None:
        stream = RngStream(0, EVAL_STREAM)
    if n0 is None:
        n0 = snr_db_to_n0(snr_db, p_t)
    per_block = int(getattr(transceiver, "symbols_per_block", 1))
    max_blocks = max(1, rule.max_symbols // per_block)
    errors = symbols = 0
    per_slot = np.zeros(per_block, dtype=np.int64)
    blocks_done = 0
    k = 0
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        while errors < rule.min_errors and blocks_done < max_blocks:
            wave = []
            b = blocks_done
            for j in range(max(1, threads)):
                if b >= max_blocks:
                    break
                n = min(rule.chunk_blocks, max_blocks - b)
                wave.append((k + j, n))
                b += n
            if pool is None:
                results = [_run_chunk(transceiver, n, n0, stream.substream(kk)) for kk, n in wave]
            else:
                results = list(pool.map(lambda kn: _run_chunk(transceiver, kn[1], n0, stream.substream(kn[0])), wave))
            for (kk, n), (cnt, err_slots) in zip(wave, results):
                k = kk + 1
                blocks_done += n
                symbols += cnt
                errors += int(err_slots.sum())
                per_slot += err_slots
                if errors >= rule.min_errors:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    return SerPoint(float(snr_db), errors / symbols, symbols, errors, tuple(int(e) for e in per_slot))


def ser_sweep(transceiver, snrs, rule: StoppingRule = StoppingRule(), seed: int = 0, p_t: float = 1.0, threads: int = 1, tag: str = "") -> SerCurve:
    """SER at every SNR in ``snrs``; point ``i`` uses substream ``i`` of the eval stream."""
    snrs = sorted(float(s) for s in snrs)
    if not snrs:
        raise InvalidInputError("empty SNR list")
    root = RngStream(seed, EVAL_STREAM)
    pts = [ser_point(transceiver, s, rule, root.substream(i), p_t, threads) for i, s in enumerate(snrs)]
    return SerCurve(pts, tag or getattr(transceiver, "name", ""), seed)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(curve: SerCurve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in curve.points:
            w.writerow([_fmt(p.snr_db), _fmt(p.ser), p.num_symbols, p.num_errors])


def read_csv(path) -> SerCurve:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    pts = [SerPoint(float(r["snr_db"]), float(r["ser"]), int(r["num_symbols"]), int(r["num_errors"])) for r in rows]
    return SerCurve(pts)


def write_combined_csv(curves: list[SerCurve], path) -> None:
    """One CSV with a leading ``scheme`` column; tags must be unique."""
    tags = [c.tag for c in curves]
    if len(set(tags)) != len(tags):
        raise InvalidInputError(f"scheme names must be unique, got {tags}")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("scheme",) + CSV_HEADER)
        for c in curves:
            for p in c.points:
                w.writerow([c.tag, _fmt(p.snr_db), _fmt(p.ser), p.num_symbols, p.num_errors])
