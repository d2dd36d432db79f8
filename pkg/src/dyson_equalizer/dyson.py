"""Reference solvers for the quadratic Dyson equation on the imaginary axis.

Everything here needs the true variance matrix ``S`` and therefore serves as
ground truth for simulations and tests: the general and rank-one Dyson
solvers, Sinkhorn scaling to a doubly regular matrix, the normalization that
fixes the scalar ambiguity of the scaling factors, the inverse map from a
Dyson solution to factors, a brute-force resolvent diagonal, and the
incoherence diagnostic comparing the general and rank-one solutions.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .equalizer import (
    DYSON_NORMALIZED,
    SINKHORN_GEO_MEAN,
    ResolventDiagonal,
    ScalingFactors,
    _denominator_tol,
)
from .errors import DegenerateMatrix, InvalidInput, NoConvergence, TooLarge
from .linalg import as_matrix, complex_shift_solve

NAIVE_MAX_SIZE = 2000


def as_variance(s):
    """Validate a variance matrix: finite and strictly positive entries."""
    s = as_matrix(s, "variance matrix")
    if np.any(s <= 0):
        raise InvalidInput("variance matrix must be strictly positive")
    return s


def _positive_vector(v, name):
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise InvalidInput(f"{name} must be a nonempty vector of positive finite entries")
    return v


def _check_eta(eta):
    if not (np.isfinite(eta) and eta > 0):
        raise InvalidInput(f"eta must be positive, got {eta}")
    return float(eta)


@dataclass(frozen=True)
class DysonSolution:
    g1: np.ndarray
    g2: np.ndarray
    eta: float
    residual: float
    iterations: int

    @property
    def g(self):
        return np.concatenate([self.g1, self.g2])


def dyson_residual(s, g1, g2, eta):
    """Sup-norm of ``1/g - eta - S_sym g`` for the coupled system."""
    r1 = 1.0 / g1 - eta - s @ g2
    r2 = 1.0 / g2 - eta - s.T @ g1
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


def _converged(residual, g1, g2, tol):
    # residual is measured against the size of 1/g, which is at least eta
    scale = max(1.0, 1.0 / min(g1.min(), g2.min()))
    return residual <= tol * scale


def solve_dyson(s, eta, tol=1e-12, max_iter=100_000, damping=0.5):
    """Solve ``eta + S g2 = 1/g1``, ``eta + S^T g1 = 1/g2`` for positive g.

    Damped fixed-point iteration ``g <- (1-b) g + b / (eta + S_sym g)``
    started from ``1/(2 eta)``; every iterate stays inside ``(0, 1/eta)``.

    Parameters
    ----------
    s : array_like, shape (m, n)
        Strictly positive variance matrix.
    eta : float
        Positive imaginary shift.
    tol : float
        Stop once the equation residual is below ``tol * max(1, max 1/g)``.
    max_iter : int
    damping : float
        Weight b of the new iterate.

    Raises
    ------
    NoConvergence
    """
    s = as_variance(s)
    eta = _check_eta(eta)
    m, n = s.shape
    g1 = np.full(m, 0.5 / eta)
    g2 = np.full(n, 0.5 / eta)
    residual = np.inf
    for it in range(1, max_iter + 1):
        t1 = 1.0 / (eta + s @ g2)
        t2 = 1.0 / (eta + s.T @ g1)
        g1 = (1.0 - damping) * g1 + damping * t1
        g2 = (1.0 - damping) * g2 + damping * t2
        if it % 5 == 0 or it == max_iter:
            residual = dyson_residual(s, g1, g2, eta)
            if _converged(residual, g1, g2, tol):
                return DysonSolution(g1, g2, eta, residual, it)
    raise NoConvergence(max_iter, residual, "solve_dyson")


def solve_dyson_rank_one(x, y, eta, tol=1e-12, max_iter=200):
    """Dyson solution for the rank-one variance matrix ``S = x y^T``.

    With ``p = y^T h2`` and ``q = x^T h1`` the solution is
    ``h1 = 1/(eta + x p)`` and ``h2 = 1/(eta + y q)``, so the system reduces
    to the scalar equation ``q = sum_i x_i / (eta + x_i p(q))``, which is
    bracketed on ``[0, sum(x)/eta]`` and solved by Brent's method.
    """
    x = _positive_vector(x, "x")
    y = _positive_vector(y, "y")
    eta = _check_eta(eta)

    def p_of(q):
        return float(np.sum(y / (eta + y * q)))

    def excess(q):
        return q - float(np.sum(x / (eta + x * p_of(q))))

    hi = float(np.sum(x)) / eta
    q, info = brentq(excess, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                     maxiter=max_iter, full_output=True, disp=False)
    if not info.converged:
        raise NoConvergence(max_iter, abs(excess(q)), "solve_dyson_rank_one")
    p = p_of(q)
    h1 = 1.0 / (eta + x * p)
    h2 = 1.0 / (eta + y * q)
    r1 = 1.0 / h1 - eta - x * (y @ h2)
    r2 = 1.0 / h2 - eta - y * (x @ h1)
    residual = float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
    if not _converged(residual, h1, h2, 100 * tol):
        raise NoConvergence(max_iter, residual, "solve_dyson_rank_one")
    return DysonSolution(h1, h2, eta, residual, info.iterations)


@dataclass(frozen=True)
class DoublyRegularScaling:
    """``S = diag(x0) @ s_tilde @ diag(y0)`` with ``s_tilde`` doubly regular."""

    x0: np.ndarray
    y0: np.ndarray
    s_tilde: np.ndarray
    dr_residual: float
    iterations: int = 0

    def factors(self):
        return ScalingFactors(self.x0, self.y0, SINKHORN_GEO_MEAN)


def doubly_regular_residual(a):
    """Largest deviation of a row or column mean of `a` from one."""
    a = np.asarray(a, dtype=np.float64)
    return float(max(np.max(np.abs(a.mean(axis=1) - 1.0)),
                     np.max(np.abs(a.mean(axis=0) - 1.0))))


def sinkhorn(s, tol=1e-12, max_iter=10_000):
    """Sinkhorn-Knopp scaling of a positive matrix to unit row and column means.

    The scalar ambiguity is fixed by making the geometric means of ``x0`` and
    ``y0`` equal.
    """
    s = as_variance(s)
    m, n = s.shape
    x0 = np.ones(m)
    y0 = np.ones(n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        x0 = (s @ (1.0 / y0)) / n
        y0 = (s.T @ (1.0 / x0)) / m
        # after the column update column means are one; rows carry the error
        row_means = (s @ (1.0 / y0)) / (n * x0)
        residual = float(np.max(np.abs(row_means - 1.0)))
        if residual <= tol:
            break
    else:
        raise NoConvergence(max_iter, residual, "sinkhorn")
    c = np.exp(0.5 * (np.mean(np.log(y0)) - np.mean(np.log(x0))))
    x0 = x0 * c
    y0 = y0 / c
    s_tilde = s / x0[:, None] / y0[None, :]
    return DoublyRegularScaling(x0, y0, s_tilde, doubly_regular_residual(s_tilde), it)


def normalize_factor_pair(x0, y0, eta):
    """Rescale ``(x0, y0) -> (x0/a, a*y0)`` so that ``x^T h1 = y^T h2``.

    ``h`` is the rank-one Dyson solution for ``x0 y0^T``, which does not
    depend on the split, so ``a = sqrt(x0^T h1 / y0^T h2)``.
    """
    x0 = _positive_vector(x0, "x0")
    y0 = _positive_vector(y0, "y0")
    h = solve_dyson_rank_one(x0, y0, eta)
    alpha = np.sqrt((x0 @ h.g1) / (y0 @ h.g2))
    return ScalingFactors(x0 / alpha, alpha * y0, DYSON_NORMALIZED)


def factors_from_g(sol: DysonSolution, m=None, n=None):
    """Invert a rank-one Dyson solution into its normalized factors."""
    g1, g2, eta = sol.g1, sol.g2, sol.eta
    m = g1.size if m is None else m
    n = g2.size if n is None else n
    if g1.size != m or g2.size != n:
        raise InvalidInput(f"solution has sizes {(g1.size, g2.size)}, expected {(m, n)}")
    d1 = float(np.sum(1.0 - eta * g1))
    d2 = float(np.sum(1.0 - eta * g2))
    tol = _denominator_tol(m, n)
    if d1 <= tol or d2 <= tol:
        raise DegenerateMatrix(f"denominators ({d1:.3e}, {d2:.3e}) are not positive")
    x = (1.0 / g1 - eta) / np.sqrt(d1)
    y = (1.0 / g2 - eta) / np.sqrt(d2)
    return ScalingFactors(x, y, DYSON_NORMALIZED)


def symmetrize(a):
    """The (m+n) x (m+n) matrix ``[[0, a], [a^T, 0]]``."""
    m, n = a.shape
    out = np.zeros((m + n, m + n))
    out[:m, m:] = a
    out[m:, :m] = a.T
    return out


def naive_resolvent_diagonal(y, eta):
    """``Im diag((Y_sym - i eta I)^-1)`` by a dense complex solve.

    Cubic in ``m + n``; refuses inputs with ``m + n > 2000``.
    """
    y = as_matrix(y)
    eta = _check_eta(eta)
    m, n = y.shape
    if m + n > NAIVE_MAX_SIZE:
        raise TooLarge(f"m + n = {m + n} exceeds {NAIVE_MAX_SIZE} for the dense oracle")
    inv = complex_shift_solve(symmetrize(y), eta, np.eye(m + n))
    d = np.diag(inv).imag.copy()
    return ResolventDiagonal(g1=d[:m], g2=d[m:], eta=eta)


@dataclass(frozen=True)
class IncoherenceDiagnostics:
    """Analytic bound on ``|g - h|_inf`` next to the measured gap.

    ``bound`` uses an unknown constant set to one, so it is a diagnostic,
    not a certificate.
    """

    w1: np.ndarray
    w2: np.ndarray
    a: float
    bound: float
    gap: float
    factors: ScalingFactors
    s_tilde: np.ndarray


def incoherence_bound(s_tilde, w1, w2):
    m, n = s_tilde.shape
    d = s_tilde - 1.0
    v2 = (w2 - w2.mean()) / np.linalg.norm(w2)
    v1 = (w1 - w1.mean()) / np.linalg.norm(w1)
    t2 = np.max(np.abs(d @ v2)) / np.sqrt(n)
    t1 = np.sqrt(m) / n * np.max(np.abs(d.T @ v1))
    return float(max(t1, t2))


def incoherence_diagnostics(s, eta):
    """Compare the Dyson solution for `s` with its rank-one surrogate."""
    s = as_variance(s)
    eta = _check_eta(eta)
    dr = sinkhorn(s)
    factors = normalize_factor_pair(dr.x0, dr.y0, eta)
    h = solve_dyson_rank_one(factors.x, factors.y, eta)
    g = solve_dyson(s, eta)
    w1 = factors.x * h.g1
    w2 = factors.y * h.g2
    return IncoherenceDiagnostics(
        w1=w1,
        w2=w2,
        a=float(factors.x @ h.g1),
        bound=incoherence_bound(dr.s_tilde, w1, w2),
        gap=float(np.max(np.abs(g.g - h.g))),
        factors=factors,
        s_tilde=dr.s_tilde,
    )
