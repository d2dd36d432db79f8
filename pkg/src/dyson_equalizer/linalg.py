"""Dense matrix validation, thin SVD and shifted complex solves.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order; :func:`as_matrix` is the single entry point that checks
them.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


def as_matrix(a, name="matrix"):
    """Return `a` as a finite, C-contiguous float64 2-D array.

    Sparse inputs (anything with a ``toarray`` method) are densified.
    """
    if hasattr(a, "toarray"):
        a = a.toarray()
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    a = np.ascontiguousarray(a)
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be 2-dimensional, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInput(f"{name} must have at least one row and column, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains NaN or Inf entries")
    return a


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``a = u @ diag(sigma) @ v.T`` of an m x n matrix with m <= n.

    Attributes
    ----------
    u : ndarray, shape (m, m)
    v : ndarray, shape (n, m)
        First m right singular vectors as columns.
    sigma : ndarray, shape (m,)
        Singular values in descending order.
    """

    u: np.ndarray
    v: np.ndarray
    sigma: np.ndarray

    @property
    def shape(self):
        return self.u.shape[0], self.v.shape[0]

    def reconstruct(self):
        return (self.u * self.sigma) @ self.v.T


def thin_svd(a):
    """Full (deterministic, LAPACK) thin SVD of a wide or square matrix.

    Parameters
    ----------
    a : array_like, shape (m, n) with m <= n

    Returns
    -------
    SvdFactors
        Signs of the singular vector pairs are whatever LAPACK returns.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m > n:
        raise InvalidInput(f"thin_svd expects m <= n, got {a.shape}; transpose first")
    u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    return SvdFactors(u=u, v=vt.T, sigma=sigma)


def complex_shift_solve(sym, eta, rhs):
    """Solve ``(sym - i*eta*I) w = rhs`` for a real symmetric `sym`.

    `rhs` may be a vector of length N or an N x k block of right-hand sides.
    """
    sym = np.asarray(sym, dtype=np.float64)
    if sym.ndim != 2 or sym.shape[0] != sym.shape[1]:
        raise InvalidInput(f"sym must be square, got shape {sym.shape}")
    if not eta > 0:
        raise InvalidInput(f"eta must be positive, got {eta}")
    rhs = np.asarray(rhs, dtype=np.complex128)
    if rhs.shape[0] != sym.shape[0] or rhs.ndim > 2:
        raise InvalidInput(
            f"rhs with shape {rhs.shape} does not match matrix of size {sym.shape[0]}"
        )
    shifted = sym.astype(np.complex128)
    shifted[np.diag_indices_from(shifted)] -= 1j * eta
    return np.linalg.solve(shifted, rhs)
