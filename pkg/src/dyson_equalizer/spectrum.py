"""Marchenko-Pastur law, empirical spectra and rank estimation.

Eigenvalues are always those of ``A A^T / n`` for an m x n matrix with
``m <= n`` (tall inputs are transposed), so the aspect ratio is
``gamma = m / n <= 1``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import EmptyInput, InvalidInput
from .linalg import as_matrix

KS_MESH_POINTS = 512


@dataclass(frozen=True)
class MpParams:
    """Marchenko-Pastur law with aspect ratio `gamma` and noise level `sigma2`."""

    gamma: float
    sigma2: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidInput(f"gamma must lie in (0, 1], got {self.gamma}")
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0.0):
            raise InvalidInput(f"sigma2 must be positive, got {self.sigma2}")

    @classmethod
    def for_shape(cls, m, n, sigma2=1.0):
        m, n = sorted((int(m), int(n)))
        return cls(m / n, sigma2)


def mp_edges(p: MpParams):
    """Support ``(beta_minus, beta_plus)`` with ``beta = sigma2 (1 -/+ sqrt(gamma))^2``."""
    r = np.sqrt(p.gamma)
    return float(p.sigma2 * (1.0 - r) ** 2), float(p.sigma2 * (1.0 + r) ** 2)


def mp_density(p: MpParams, tau):
    """Marchenko-Pastur density, zero outside the support."""
    lo, hi = mp_edges(p)
    tau = np.asarray(tau, dtype=np.float64)
    inside = (tau > lo) & (tau < hi)
    t = np.where(inside, tau, 0.5 * (lo + hi))
    dens = np.sqrt((hi - t) * (t - lo)) / (2.0 * np.pi * p.sigma2 * p.gamma * t)
    out = np.where(inside, dens, 0.0)
    return out if out.ndim else float(out)


def _mass_below(p: MpParams, t):
    lo, hi = mp_edges(p)
    scale = 2.0 * np.pi * p.sigma2 * p.gamma
    # the square-root factor at the left edge goes into the quadrature weight
    if lo > 0.0:
        f = lambda s: np.sqrt(hi - s) / (scale * s)
        wvar = (0.5, 0.0)
    else:
        f = lambda s: np.sqrt(hi - s) / scale
        wvar = (-0.5, 0.0)
    val, _ = quad(f, lo, t, weight="alg", wvar=wvar, epsabs=1e-10, epsrel=1e-10, limit=200)
    return val


def mp_cdf(p: MpParams, tau):
    """Marchenko-Pastur CDF by adaptive quadrature of the density.

    Accepts a scalar or an array; returns values in [0, 1] that are
    nondecreasing in `tau`, exactly 0 at or below ``beta_minus`` and exactly
    1 at or above ``beta_plus``.
    """
    lo, hi = mp_edges(p)
    tau = np.asarray(tau, dtype=np.float64)
    flat = tau.ravel()
    out = np.empty_like(flat)
    out[flat <= lo] = 0.0
    out[flat >= hi] = 1.0
    mid = np.flatnonzero((flat > lo) & (flat < hi))
    if mid.size:
        order = mid[np.argsort(flat[mid])]
        vals = np.array([_mass_below(p, flat[i]) for i in order])
        # quadrature noise must not break monotonicity
        out[order] = np.clip(np.maximum.accumulate(vals), 0.0, 1.0)
    out = out.reshape(tau.shape)
    return out if out.ndim else float(out)


def covariance_eigenvalues(a):
    """Ascending eigenvalues of ``A A^T / n`` with ``m <= n``, via the SVD."""
    a = as_matrix(a)
    if a.shape[0] > a.shape[1]:
        a = a.T
    n = a.shape[1]
    sigma = np.linalg.svd(a, compute_uv=False)
    return np.sort(sigma**2 / n)


@dataclass(frozen=True)
class Esd:
    """Empirical spectral distribution of a set of eigenvalues."""

    eigenvalues: np.ndarray

    def __len__(self):
        return self.eigenvalues.size

    def cdf(self, tau):
        """Fraction of eigenvalues ``<= tau``."""
        return np.searchsorted(self.eigenvalues, tau, side="right") / self.eigenvalues.size

    def cdf_left(self, tau):
        """Fraction of eigenvalues ``< tau`` (the left limit of :meth:`cdf`)."""
        return np.searchsorted(self.eigenvalues, tau, side="left") / self.eigenvalues.size


def esd(eigs):
    """Build an :class:`Esd`; eigenvalues must be finite and nonnegative.

    Raises
    ------
    EmptyInput
    """
    e = np.asarray(eigs, dtype=np.float64).ravel()
    if e.size == 0:
        raise EmptyInput("no eigenvalues given")
    if not np.all(np.isfinite(e)):
        raise InvalidInput("eigenvalues must be finite")
    # tiny negative values are rounding from eigensolvers
    if np.any(e < -1e-12 * max(1.0, np.abs(e).max())):
        raise InvalidInput("eigenvalues must be nonnegative")
    return Esd(np.sort(np.maximum(e, 0.0)))


def ks_distance(e: Esd, p: MpParams):
    """Kolmogorov-Smirnov distance between an ESD and the MP law.

    The supremum is taken over every eigenvalue (from both sides of its
    jump) and 512 evenly spaced points on the MP support.
    """
    lo, hi = mp_edges(p)
    grid = np.concatenate([e.eigenvalues, np.linspace(lo, hi, KS_MESH_POINTS)])
    f_mp = mp_cdf(p, grid)
    d_right = np.abs(e.cdf(grid) - f_mp)
    d_left = np.abs(e.cdf_left(grid) - f_mp)
    return float(max(d_right.max(), d_left.max()))


@dataclass(frozen=True)
class RankEstimate:
    r_hat: int
    threshold: float
    exceed_margins: np.ndarray
    epsilon: float = 0.0


def rank_threshold(m, n, epsilon=0.0):
    """Singular-value threshold ``sqrt(n ((1 + sqrt(m/n))^2 + epsilon))``.

    For ``epsilon = 0`` this is ``sqrt(m) + sqrt(n)``.
    """
    m, n = sorted((int(m), int(n)))
    if epsilon < 0:
        raise InvalidInput(f"epsilon must be nonnegative, got {epsilon}")
    if epsilon == 0:
        return float(np.sqrt(m) + np.sqrt(n))
    return float(np.sqrt(n * ((1.0 + np.sqrt(m / n)) ** 2 + epsilon)))


def rank_from_singular_values(sigma, m, n, epsilon=0.0):
    """Count singular values strictly above :func:`rank_threshold`."""
    sigma = np.sort(np.asarray(sigma, dtype=np.float64).ravel())[::-1]
    thr = rank_threshold(m, n, epsilon)
    margins = sigma - thr
    return RankEstimate(int(np.count_nonzero(margins > 0)), thr, margins, float(epsilon))


def estimate_rank(y_hat, epsilon=0.0):
    """Number of singular values of a normalized matrix above the MP edge.

    Parameters
    ----------
    y_hat : array_like
        Matrix whose noise has unit average variance in every row and
        column, e.g. the output of :func:`equalize`.
    epsilon : float
        Extra margin added to the eigenvalue edge ``(1 + sqrt(m/n))^2``.
    """
    y_hat = as_matrix(y_hat, "normalized matrix")
    m, n = y_hat.shape
    sigma = np.linalg.svd(y_hat, compute_uv=False)
    return rank_from_singular_values(sigma, m, n, epsilon)


def snr_gain_tau(x, y):
    """Spectral SNR gain ``mean(x) mean(1/x) mean(y) mean(1/y)``; at least one."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    for name, v in (("x", x), ("y", y)):
        if v.size == 0 or not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidInput(f"{name} must be a nonempty positive finite vector")
    return float(np.mean(x) * np.mean(1.0 / x) * np.mean(y) * np.mean(1.0 / y))


@dataclass(frozen=True)
class MpFit:
    """Summary of how well a spectrum follows the MP law."""

    ks: float
    lambda_max: float
    beta_plus: float
    bin_edges: np.ndarray
    counts: np.ndarray
    density_grid: np.ndarray
    density: np.ndarray

    @property
    def edge_gap(self):
        return self.lambda_max - self.beta_plus


def mp_fit(a, bins=50, sigma2=1.0):
    """Compare the spectrum of ``A A^T / n`` with MP(m/n, sigma2)."""
    a = as_matrix(a)
    p = MpParams.for_shape(*a.shape, sigma2=sigma2)
    e = esd(covariance_eigenvalues(a))
    lo, hi = mp_edges(p)
    counts, edges = np.histogram(e.eigenvalues, bins=bins,
                                 range=(min(lo, e.eigenvalues[0]), max(hi, e.eigenvalues[-1])))
    grid = np.linspace(lo, hi, 200)
    return MpFit(
        ks=ks_distance(e, p),
        lambda_max=float(e.eigenvalues[-1]),
        beta_plus=hi,
        bin_edges=edges,
        counts=counts,
        density_grid=grid,
        density=mp_density(p, grid),
    )
