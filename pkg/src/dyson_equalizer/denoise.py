"""Low-rank denoising with equalized weights, oracle baselines and weighted loss.

:func:`denoise_equalized` truncates the SVD of the equalized matrix and
undoes the scaling. Because the noise variance is modeled as a rank-one
product ``x y^T``, this solves the weighted low-rank approximation with
weights ``1 / (x_i y_j)`` in closed form. The oracle methods need the clean
signal and exist only for simulations.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .equalizer import EtaPolicy, equalize
from .errors import InvalidInput, RankOutOfRange, ShapeMismatch
from .linalg import as_matrix
from .spectrum import estimate_rank

EQUALIZED_SVT = "EqualizedSvt"
RAW_SVT = "RawSvt"
ORACLE_SVT = "OracleSvt"
ORACLE_SHRINKAGE = "OracleShrinkage"
METHODS = (EQUALIZED_SVT, RAW_SVT, ORACLE_SVT, ORACLE_SHRINKAGE)


@dataclass(frozen=True)
class DenoiseResult:
    x_bar: np.ndarray
    r_used: int
    method: str


def _check_rank(r, m, n):
    if not (isinstance(r, (int, np.integer)) and 0 <= r <= min(m, n)):
        raise RankOutOfRange(f"rank must be an integer in [0, {min(m, n)}], got {r!r}")
    return int(r)


def truncate_svd(a, r):
    """Best rank-`r` approximation of `a` in Frobenius norm.

    ``r = min(m, n)`` returns a copy of `a` unchanged and ``r = 0`` returns
    zeros, so no SVD round-off is introduced in either case.

    Raises
    ------
    RankOutOfRange
    """
    a = as_matrix(a)
    r = _check_rank(r, *a.shape)
    if r == min(a.shape):
        return a.copy()
    if r == 0:
        return np.zeros_like(a)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return (u[:, :r] * s[:r]) @ vt[:r]


def weighted_truncation(y, x_w, y_w, r):
    """``diag(x)^(1/2) T_r(diag(x)^(-1/2) Y diag(y)^(-1/2)) diag(y)^(1/2)``.

    The minimizer of ``sum (Theta - Y)^2 / (x_i y_j)`` over rank-`r` Theta.
    """
    y = as_matrix(y)
    rx = np.sqrt(np.asarray(x_w, dtype=np.float64))[:, None]
    ry = np.sqrt(np.asarray(y_w, dtype=np.float64))[None, :]
    if rx.shape[0] != y.shape[0] or ry.shape[1] != y.shape[1]:
        raise ShapeMismatch("weight vectors do not match the matrix shape")
    r = _check_rank(r, *y.shape)
    if r == min(y.shape):
        return y.copy()
    return truncate_svd(y / rx / ry, r) * rx * ry


def denoise_equalized(y, policy: EtaPolicy = EtaPolicy(), rank: Optional[int] = None,
                      epsilon=0.0) -> DenoiseResult:
    """Equalize, truncate at the estimated (or given) rank, and unscale.

    Parameters
    ----------
    y : array_like, shape (m, n)
    policy : EtaPolicy
    rank : int, optional
        Truncation rank. If omitted, the number of singular values of the
        equalized matrix above ``sqrt(m) + sqrt(n)`` is used.
    epsilon : float
        Margin for the automatic rank estimate.
    """
    y = as_matrix(y, "data matrix")
    res = equalize(y, policy)
    r = estimate_rank(res.y_hat, epsilon).r_hat if rank is None else _check_rank(rank, *y.shape)
    if r == min(y.shape):
        # unscaling would only add round-off to the identity map
        return DenoiseResult(y.copy(), r, EQUALIZED_SVT)
    rx = np.sqrt(res.factors.x)[:, None]
    ry = np.sqrt(res.factors.y)[None, :]
    return DenoiseResult(truncate_svd(res.y_hat, r) * rx * ry, r, EQUALIZED_SVT)


def raw_svt(y, r) -> DenoiseResult:
    """Plain truncated SVD of the data at rank `r`."""
    return DenoiseResult(truncate_svd(y, r), int(r), RAW_SVT)


def _pair(y, x_true):
    y = as_matrix(y, "data matrix")
    x_true = as_matrix(x_true, "signal matrix")
    if y.shape != x_true.shape:
        raise ShapeMismatch(f"data {y.shape} and signal {x_true.shape} differ in shape")
    return y, x_true


def svt_errors(y, x_true):
    """Squared Frobenius error of ``T_r(Y)`` against `x_true` for every r.

    Uses ``|T_r Y - X|^2 = |X|^2 - 2 sum_k s_k c_k + sum_k s_k^2`` with
    ``c_k = u_k^T X v_k``, so one SVD covers all ranks.
    """
    y, x_true = _pair(y, x_true)
    u, s, vt = np.linalg.svd(y, full_matrices=False)
    c = np.einsum("ik,ij,kj->k", u, x_true, vt)
    steps = np.concatenate([[0.0], np.cumsum(s * s - 2.0 * s * c)])
    return np.sum(x_true**2) + steps


def oracle_svt(y, x_true) -> DenoiseResult:
    """Truncated SVD of `y` at the rank that minimizes the error to `x_true`.

    Ties go to the smallest rank.
    """
    y, x_true = _pair(y, x_true)
    errs = svt_errors(y, x_true)
    # round-off can make equal errors differ in the last bits
    best = errs.min()
    r = int(np.flatnonzero(errs <= best + 1e-12 * max(1.0, abs(best)))[0])
    return DenoiseResult(truncate_svd(y, r), r, ORACLE_SVT)


def oracle_shrinkage(y, x_true, r=None) -> DenoiseResult:
    """Keep the top `r` singular vectors of `y` with coefficients ``max(0, u^T X v)``.

    Each coefficient is the least-squares optimal weight for its component.
    ``r`` defaults to all components.
    """
    y, x_true = _pair(y, x_true)
    r = min(y.shape) if r is None else _check_rank(r, *y.shape)
    u, _, vt = np.linalg.svd(y, full_matrices=False)
    u, vt = u[:, :r], vt[:r]
    theta = np.maximum(np.einsum("ik,ij,kj->k", u, x_true, vt), 0.0)
    return DenoiseResult((u * theta) @ vt, r, ORACLE_SHRINKAGE)


def relative_mse(estimate, x_true):
    """``|estimate - X|_F^2 / |X|_F^2``."""
    estimate, x_true = _pair(estimate, x_true)
    return float(np.sum((estimate - x_true) ** 2) / np.sum(x_true**2))


def weighted_loss(theta, y, s):
    """``sum_ij (Theta_ij - Y_ij)^2 / S_ij``."""
    theta = as_matrix(theta)
    y = as_matrix(y)
    s = as_matrix(s, "variance matrix")
    if not theta.shape == y.shape == s.shape:
        raise ShapeMismatch(f"shapes {theta.shape}, {y.shape}, {s.shape} differ")
    if np.any(s <= 0):
        raise InvalidInput("variance matrix must be strictly positive")
    return float(np.sum((theta - y) ** 2 / s))


def gaussian_nll(theta, y, a):
    """Negative log-likelihood of `y` under independent ``N(Theta_ij, A_ij)``."""
    return 0.5 * weighted_loss(theta, y, a) + 0.5 * float(np.sum(np.log(2.0 * np.pi * as_matrix(a))))


def expected_gaussian_nll(s, a):
    """Expectation of :func:`gaussian_nll` at the true mean when ``Var = S``.

    Equals ``0.5 sum (S/A + log(2 pi A))``, which is minimized by ``A = S``.
    """
    s = as_matrix(s)
    a = as_matrix(a)
    if s.shape != a.shape:
        raise ShapeMismatch(f"shapes {s.shape} and {a.shape} differ")
    return float(0.5 * np.sum(s / a + np.log(2.0 * np.pi * a)))
