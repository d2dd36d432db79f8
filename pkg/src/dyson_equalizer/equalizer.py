"""Data-driven row/column normalization (the Dyson Equalizer).

The imaginary part of the resolvent diagonal of the symmetrized data matrix
is computed in closed form from the SVD, turned into row and column scaling
factors, and used to rescale the data so that the average noise variance is
one in every row and every column.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateMatrix, InvalidInput, ZeroRowOrColumn
from .linalg import SvdFactors, as_matrix, thin_svd

ESTIMATED_ALPHA_ONE = "EstimatedAlphaOne"
SINKHORN_GEO_MEAN = "SinkhornGeoMean"
DYSON_NORMALIZED = "DysonNormalized"
CONVENTIONS = (ESTIMATED_ALPHA_ONE, SINKHORN_GEO_MEAN, DYSON_NORMALIZED)


@dataclass(frozen=True)
class EtaPolicy:
    """How to pick the imaginary shift eta.

    Use :meth:`quantile` (default: the median singular value) or
    :meth:`fixed`.
    """

    mode: str = "quantile"
    value: float = 0.5

    def __post_init__(self):
        if self.mode == "quantile":
            if not 0.0 < self.value < 1.0:
                raise InvalidInput(f"eta quantile must lie in (0, 1), got {self.value}")
        elif self.mode == "fixed":
            if not (np.isfinite(self.value) and self.value > 0.0):
                raise InvalidInput(f"fixed eta must be positive, got {self.value}")
        else:
            raise InvalidInput(f"unknown eta mode {self.mode!r}")

    @classmethod
    def quantile(cls, q=0.5):
        return cls("quantile", float(q))

    @classmethod
    def fixed(cls, eta):
        return cls("fixed", float(eta))

    def select(self, sigma):
        """Return eta for the singular values `sigma`.

        Quantiles use linear interpolation between order statistics, so
        q = 0.5 is the usual median (mean of the two middle values when the
        count is even).
        """
        if self.mode == "fixed":
            return self.value
        eta = float(np.quantile(np.asarray(sigma, dtype=np.float64), self.value))
        if not eta > 0.0:
            raise DegenerateMatrix(
                f"the {self.value}-quantile of the singular values is {eta}; "
                "eta must be positive"
            )
        return eta


@dataclass(frozen=True)
class ResolventDiagonal:
    """Imaginary part of the resolvent diagonal at ``z = i*eta``.

    ``g1`` has one entry per row, ``g2`` one per column. When built from an
    SVD, the complements ``1 - eta*g`` are also stored; they are computed
    without cancellation and are used for the scaling factors.
    """

    g1: np.ndarray
    g2: np.ndarray
    eta: float
    c1: Optional[np.ndarray] = field(default=None, repr=False)
    c2: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def shape(self):
        return self.g1.size, self.g2.size

    def complements(self):
        c1 = self.c1 if self.c1 is not None else 1.0 - self.eta * self.g1
        c2 = self.c2 if self.c2 is not None else 1.0 - self.eta * self.g2
        return c1, c2

    def swapped(self):
        return ResolventDiagonal(self.g2, self.g1, self.eta, self.c2, self.c1)


@dataclass(frozen=True)
class ScalingFactors:
    """Positive row factors `x` and column factors `y`.

    ``convention`` records how the scalar ambiguity ``(a*x, y/a)`` was fixed.
    """

    x: np.ndarray
    y: np.ndarray
    convention: str = ESTIMATED_ALPHA_ONE

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise InvalidInput(f"unknown convention {self.convention!r}")

    def swapped(self):
        return ScalingFactors(self.y, self.x, self.convention)


@dataclass(frozen=True)
class EqualizeResult:
    """Output of :func:`equalize`, always in the orientation of the input."""

    y_hat: np.ndarray
    factors: ScalingFactors
    gdiag: ResolventDiagonal
    eta: float
    denom1: float
    denom2: float
    transposed: bool
    sigma: np.ndarray = field(repr=False)

    @property
    def x_hat(self):
        return self.factors.x


def resolvent_diagonal(svd: SvdFactors, eta: float) -> ResolventDiagonal:
    """Resolvent diagonal of the symmetrized matrix from its thin SVD.

    ``g1_i = sum_k eta/(sigma_k^2+eta^2) U_ik^2`` and
    ``g2_j = 1/eta + sum_k (eta/(sigma_k^2+eta^2) - 1/eta) V_jk^2``.
    """
    if not eta > 0:
        raise InvalidInput(f"eta must be positive, got {eta}")
    s2 = svd.sigma**2
    w = eta / (s2 + eta**2)
    # 1 - eta*w_k, written so that it is exactly 0 for sigma_k = 0
    rho = s2 / (s2 + eta**2)
    u2 = svd.u**2
    v2 = svd.v**2
    g1 = u2 @ w
    g2 = 1.0 / eta + v2 @ (w - 1.0 / eta)
    c1 = u2 @ rho
    c2 = v2 @ rho
    g1 = np.minimum(g1, 1.0 / eta)
    g2 = np.minimum(g2, 1.0 / eta)
    # rows and columns that are zero up to the usual numerical-rank tolerance
    # get their exact values, so their factors come out as exactly zero
    tol = (max(svd.shape) * np.finfo(float).eps * svd.sigma.max(initial=0.0)) ** 2
    for g, c, energy in ((g1, c1, u2 @ s2), (g2, c2, v2 @ s2)):
        dead = energy <= tol
        g[dead] = 1.0 / eta
        c[dead] = 0.0
    return ResolventDiagonal(g1=g1, g2=g2, eta=float(eta), c1=c1, c2=c2)


def _denominator_tol(m, n):
    return 1e-12 * max(m, n)


def factor_denominators(gdiag: ResolventDiagonal):
    """Return ``(m - eta*|g1|_1, n - eta*|g2|_1)``."""
    c1, c2 = gdiag.complements()
    return float(np.sum(c1)), float(np.sum(c2))


def estimate_factors(gdiag: ResolventDiagonal, m=None, n=None) -> ScalingFactors:
    """Scaling factors ``(1/g - eta) / sqrt(m - eta*|g|_1)`` for rows and columns.

    Raises
    ------
    DegenerateMatrix
        If either denominator is not safely positive (the data is zero).
    """
    m = gdiag.g1.size if m is None else m
    n = gdiag.g2.size if n is None else n
    if gdiag.g1.size != m or gdiag.g2.size != n:
        raise InvalidInput(f"resolvent diagonal has shape {gdiag.shape}, expected {(m, n)}")
    c1, c2 = gdiag.complements()
    d1, d2 = float(np.sum(c1)), float(np.sum(c2))
    tol = _denominator_tol(m, n)
    if d1 <= tol or d2 <= tol:
        raise DegenerateMatrix(
            f"scaling-factor denominators ({d1:.3e}, {d2:.3e}) are not positive; "
            "is the matrix zero?"
        )
    x = np.maximum(c1, 0.0) / gdiag.g1 / np.sqrt(d1)
    y = np.maximum(c2, 0.0) / gdiag.g2 / np.sqrt(d2)
    return ScalingFactors(x=x, y=y, convention=ESTIMATED_ALPHA_ONE)


def zero_lines(a):
    """Indices of all-zero rows and all-zero columns of `a`."""
    nz = a != 0
    return np.flatnonzero(~nz.any(axis=1)), np.flatnonzero(~nz.any(axis=0))


def equalize(y, policy: EtaPolicy = EtaPolicy()) -> EqualizeResult:
    """Normalize rows and columns of `y` by estimated noise scaling factors.

    Parameters
    ----------
    y : array_like, shape (m, n)
        Data matrix. Tall inputs are transposed internally and the result is
        transposed back.
    policy : EtaPolicy
        Choice of eta; the default is the median singular value.

    Returns
    -------
    EqualizeResult
        ``y_hat = diag(x)^(-1/2) @ y @ diag(y)^(-1/2)`` together with the
        factors, the resolvent diagonal and the two denominators.

    Raises
    ------
    DegenerateMatrix
        For the zero matrix or when eta cannot be made positive.
    ZeroRowOrColumn
        When some row or column is entirely zero.
    """
    y = as_matrix(y, "data matrix")
    if not np.any(y):
        raise DegenerateMatrix("the data matrix is identically zero")
    rows, cols = zero_lines(y)
    if rows.size or cols.size:
        raise ZeroRowOrColumn(rows, cols)

    transposed = y.shape[0] > y.shape[1]
    work = y.T if transposed else y
    m, n = work.shape
    svd = thin_svd(work)
    eta = policy.select(svd.sigma)
    gdiag = resolvent_diagonal(svd, eta)
    factors = estimate_factors(gdiag, m, n)
    d1, d2 = factor_denominators(gdiag)
    y_hat = work / np.sqrt(factors.x)[:, None] / np.sqrt(factors.y)[None, :]

    if transposed:
        y_hat = y_hat.T
        factors = factors.swapped()
        gdiag = gdiag.swapped()
        d1, d2 = d2, d1
    return EqualizeResult(
        y_hat=np.ascontiguousarray(y_hat),
        factors=factors,
        gdiag=gdiag,
        eta=eta,
        denom1=d1,
        denom2=d2,
        transposed=transposed,
        sigma=svd.sigma,
    )
