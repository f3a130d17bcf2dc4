"""Signal constellations: catalog, ML detection, symbol error probability, files."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erfc

from .linalg import InvalidInputError
from .rng import RngStream

__all__ = [
    "CATALOG",
    "Constellation",
    "ConstellationFileError",
    "UnsupportedConstellationError",
    "build",
    "detect",
    "from_points",
    "qfunc",
    "ser_analytic",
    "ser_montecarlo",
    "montecarlo_counts",
    "save",
    "load",
    "resolve",
]

# name -> (PAM levels on the in-phase axis, PAM levels on the quadrature axis)
_GRIDS = {
    "trivial1": (1, 1),
    "bpsk": (2, 1),
    "qpsk": (2, 2),
    "qam8": (4, 2),
    "qam16": (4, 4),
}
CATALOG = tuple(_GRIDS)


class UnsupportedConstellationError(ValueError):
    """No closed-form error probability exists for this constellation."""


class ConstellationFileError(ValueError):
    """Malformed constellation file."""


@dataclass(frozen=True, eq=False)
class Constellation:
    """Finite set of complex points; the label of a point is its index.

    ``grid`` is ``(levels_i, levels_q)`` for rectangular catalog entries and
    ``None`` for learned or loaded shapes.
    """

    points: np.ndarray
    name: str = "custom"
    grid: tuple[int, int] | None = field(default=None)

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def __len__(self) -> int:
        return self.size

    @property
    def bits(self) -> float:
        return float(np.log2(self.size))

    def average_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def min_distance(self) -> float:
        if self.size < 2:
            return float("inf")
        d = np.abs(self.points[:, None] - self.points[None, :])
        return float(d[~np.eye(self.size, dtype=bool)].min())

    def modulate(self, labels) -> np.ndarray:
        return self.points[np.asarray(labels)]


def _gray(n: int) -> np.ndarray:
    k = np.arange(n)
    return k ^ (k >> 1)


def _pam(levels: int) -> np.ndarray:
    return np.arange(-(levels - 1), levels, 2, dtype=np.float64)


def build(kind: str) -> Constellation:
    """Unit-energy catalog constellation with Gray labels.

    ``trivial1`` is the single point 0 (zero bits, zero energy). ``qam8`` is
    the rectangular 4x2 grid.
    """
    try:
        li, lq = _GRIDS[kind]
    except KeyError:
        raise InvalidInputError(f"unknown constellation {kind!r}; choose from {CATALOG}") from None
    if kind == "trivial1":
        return Constellation(np.zeros(1, dtype=np.complex128), kind, (1, 1))
    bits_q = int(np.log2(lq))
    gi, gq = _gray(li), _gray(lq)
    ai, aq = _pam(li), _pam(lq)
    pts = np.empty(li * lq, dtype=np.complex128)
    for a in range(li):
        for b in range(lq):
            pts[(gi[a] << bits_q) | gq[b]] = ai[a] + 1j * aq[b]
    pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(pts, kind, (li, lq))


def from_points(points, name: str = "custom") -> Constellation:
    """Normalize arbitrary distinct points to unit average energy."""
    pts = np.asarray(points, dtype=np.complex128).ravel()
    if pts.size == 0:
        raise InvalidInputError("constellation needs at least one point")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("constellation points must be finite")
    energy = np.mean(np.abs(pts) ** 2)
    if pts.size >= 2:
        if energy == 0:
            raise InvalidInputError("cannot normalize an all-zero constellation")
        pts = pts / np.sqrt(energy)
        if len(np.unique(np.round(pts, 12))) != pts.size:
            raise InvalidInputError("constellation points must be distinct")
    return Constellation(pts, name, None)


def detect(c: Constellation, y, gain=1.0, n0: float = 1.0):
    """Nearest-point (ML under AWGN) detection of ``y`` against ``gain * points``.

    Broadcasts over ``y`` and ``gain``. Ties resolve to the lowest label.
    ``n0`` does not change the decision and is accepted for interface symmetry.
    """
    y = np.asarray(y, dtype=np.complex128)
    g = np.asarray(gain, dtype=np.complex128)
    if c.size == 1:
        return np.zeros(np.broadcast(y, g).shape, dtype=np.int64)
    d = np.abs(y[..., None] - g[..., None] * c.points) ** 2
    return np.argmin(d, axis=-1)


def qfunc(x):
    """Gaussian tail probability Q(x)."""
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / np.sqrt(2.0))


def ser_analytic(c: Constellation, gamma):
    """Exact symbol error probability of a catalog constellation in AWGN.

    ``gamma`` is the symbol SNR Es/N0 (linear) for the unit-energy
    constellation. Rectangular grids factor into two independent PAM
    decisions with half-spacing ``d``; each has error ``2(1-1/L) Q(d sqrt(2 gamma))``.
    """
    if c.grid is None:
        raise UnsupportedConstellationError(f"no closed form for {c.name!r}; use ser_montecarlo")
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(gamma < 0):
        raise InvalidInputError("gamma must be >= 0")
    li, lq = c.grid
    if c.size == 1:
        return np.zeros_like(gamma)[()]
    # raw levels are odd integers; mean energy of L-PAM on them is (L^2 - 1)/3
    d = 1.0 / np.sqrt((li * li - 1) / 3.0 + (lq * lq - 1) / 3.0)
    t = qfunc(d * np.sqrt(2.0 * gamma))
    p_i = 2.0 * (1.0 - 1.0 / li) * t
    p_q = 2.0 * (1.0 - 1.0 / lq) * t
    return (p_i + p_q - p_i * p_q)[()]


def montecarlo_counts(
    c: Constellation,
    gamma: float,
    stream: RngStream,
    min_errors: int = 100,
    max_symbols: int = 10**7,
    chunk: int = 100_000,
) -> tuple[int, int]:
    """Simulate ``y = sqrt(gamma) s + n``, ``n ~ CN(0, 1)``; return (errors, symbols)."""
    if gamma < 0:
        raise InvalidInputError("gamma must be >= 0")
    amp = np.sqrt(gamma)
    errors = symbols = 0
    k = 0
    while errors < min_errors and symbols < max_symbols:
        n = min(chunk, max_symbols - symbols)
        sub = stream.substream(k)
        k += 1
        labels = sub.uniform_message(c.size, n) if c.size > 1 else np.zeros(n, dtype=np.int64)
        y = amp * c.points[labels] + sub.standard_complex_gaussian(n)
        errors += int(np.count_nonzero(detect(c, y, amp) != labels))
        symbols += n
    return errors, symbols


def ser_montecarlo(c: Constellation, gamma: float, stream: RngStream, min_errors: int = 100, max_symbols: int = 10**7) -> float:
    """Monte-Carlo counterpart of :func:`ser_analytic`, valid for any constellation."""
    e, n = montecarlo_counts(c, gamma, stream, min_errors, max_symbols)
    return e / n


def save(c: Constellation, path) -> None:
    """Write one ``re<TAB>im`` line per point, labels in file order."""
    with open(path, "w", newline="\n") as f:
        for p in c.points:
            f.write(f"{p.real:.17g}\t{p.imag:.17g}\n")


def load(path, name: str | None = None) -> Constellation:
    """Read a constellation file and renormalize to unit average energy."""
    path = Path(path)
    pts = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) != 2:
                raise ConstellationFileError(f"{path}:{lineno}: expected 're<TAB>im', got {line.rstrip()!r}")
            try:
                re_, im = float(parts[0]), float(parts[1])
            except ValueError:
                raise ConstellationFileError(f"{path}:{lineno}: not a number: {line.rstrip()!r}") from None
            if not (np.isfinite(re_) and np.isfinite(im)):
                raise ConstellationFileError(f"{path}:{lineno}: non-finite value")
            pts.append(complex(re_, im))
    if not pts:
        raise ConstellationFileError(f"{path}: no points")
    try:
        return from_points(pts, name or path.stem)
    except InvalidInputError as e:
        raise ConstellationFileError(f"{path}: {e}") from None


def resolve(spec: str) -> Constellation:
    """Catalog name or path to a constellation file."""
    if spec in _GRIDS:
        return build(spec)
    return load(spec)
