"""Small dense complex linear algebra.

Matrices are plain ``complex128`` numpy arrays. Every function accepts a
single matrix of shape ``(rows, cols)`` or a stack of shape
``(..., rows, cols)`` so that Monte-Carlo code can process a whole batch of
channel realizations at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RANK_RTOL",
    "InvalidInputError",
    "SingularChannelError",
    "SvdResult",
    "as_complex_matrix",
    "svd",
    "svd_batch",
    "pseudo_inverse",
    "to_real_composite",
    "from_real_composite",
    "hermitian",
]

# singular values at or below RANK_RTOL * sigma_max count as zero
RANK_RTOL = 1e-12


class InvalidInputError(ValueError):
    """Raised for malformed or non-finite numerical input."""


class SingularChannelError(np.linalg.LinAlgError):
    """Raised when a channel matrix lacks the rank an operation needs."""


def as_complex_matrix(x, name: str = "matrix") -> np.ndarray:
    """Return ``x`` as a finite complex128 array with at least two dims."""
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim < 2:
        raise InvalidInputError(f"{name} must be at least 2-D, got shape {arr.shape}")
    if arr.shape[-1] < 1 or arr.shape[-2] < 1:
        raise InvalidInputError(f"{name} must have rows, cols >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return arr


def hermitian(x: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(x, -1, -2))


@dataclass(frozen=True)
class SvdResult:
    """Rank-truncated SVD ``h = u @ diag(sigma) @ v^H``.

    Attributes
    ----------
    u : ndarray, shape (n_r, rank)
    sigma : ndarray, shape (rank,)
        Strictly positive, descending.
    v : ndarray, shape (n_t, rank)
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.sigma.shape[0])


def svd(h) -> SvdResult:
    """Compact SVD of a single matrix with numerical-rank truncation.

    Singular values ``<= RANK_RTOL * sigma_max`` are dropped together with
    their singular vectors. The all-zero matrix has rank 0.

    Examples
    --------
    >>> r = svd(np.diag([3.0, 0.0]))
    >>> r.sigma
    array([3.])
    """
    h = as_complex_matrix(h, "h")
    if h.ndim != 2:
        raise InvalidInputError("svd expects a single matrix; use svd_batch for stacks")
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    smax = s[0] if s.size else 0.0
    keep = s > RANK_RTOL * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    r = int(np.count_nonzero(keep))
    return SvdResult(u=u[:, :r], sigma=s[:r].copy(), v=hermitian(vh)[:, :r])


def svd_batch(h) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Untruncated compact SVD of a stack of matrices.

    Returns ``(u, sigma, v)`` with shapes ``(..., n_r, k)``, ``(..., k)`` and
    ``(..., n_t, k)``, ``k = min(n_r, n_t)``. Callers decide what to do with
    near-zero singular values (compare against ``RANK_RTOL * sigma[..., :1]``).
    """
    h = as_complex_matrix(h, "h")
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    return u, s, hermitian(vh)


def pseudo_inverse(h) -> np.ndarray:
    """Right pseudo-inverse ``h^H (h h^H)^-1`` of a full-row-rank matrix.

    Works on stacks. Raises :class:`SingularChannelError` when any matrix in
    the stack has a smallest singular value at or below the rank threshold.
    """
    h = as_complex_matrix(h, "h")
    n_r, n_t = h.shape[-2:]
    if n_t < n_r:
        raise SingularChannelError(f"need n_t >= n_r for a right inverse, got {n_r}x{n_t}")
    s = np.linalg.svd(h, compute_uv=False)
    if np.any(s[..., -1] <= RANK_RTOL * s[..., 0]):
        raise SingularChannelError("channel matrix is rank deficient")
    gram = h @ hermitian(h)
    # gram is Hermitian, so (gram^-1 h)^H = h^H gram^-1
    return hermitian(np.linalg.solve(gram, h))


def to_real_composite(x) -> np.ndarray:
    """Column-stack a complex matrix, then lay out all reals before all imaginaries.

    ``(..., rows, cols)`` maps to ``(..., 2*rows*cols)``.

    Examples
    --------
    >>> to_real_composite(np.array([[1 + 2j], [3 + 4j]]))
    array([1., 3., 2., 4.])
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim < 2:
        raise InvalidInputError(f"expected a matrix, got shape {x.shape}")
    v = np.swapaxes(x, -1, -2).reshape(x.shape[:-2] + (-1,))
    return np.concatenate([v.real, v.imag], axis=-1)


def from_real_composite(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`to_real_composite`."""
    v = np.asarray(v, dtype=np.float64)
    n = rows * cols
    if v.shape[-1] != 2 * n:
        raise InvalidInputError(f"expected trailing length {2 * n}, got {v.shape[-1]}")
    z = v[..., :n] + 1j * v[..., n:]
    return np.swapaxes(z.reshape(v.shape[:-1] + (cols, rows)), -1, -2)
