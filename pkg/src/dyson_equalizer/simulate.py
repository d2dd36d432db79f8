"""Seeded generators for signals, variance matrices and noise, plus sweep runners.

Every random draw comes from a generator keyed by ``(seed, trial, stream)``
through :class:`numpy.random.SeedSequence`, so results do not depend on the
order in which trials run. Set ``DYSON_EQ_THREADS`` to run sweep trials on
several threads.
"""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .denoise import (
    EQUALIZED_SVT,
    ORACLE_SHRINKAGE,
    ORACLE_SVT,
    denoise_equalized,
    oracle_shrinkage,
    oracle_svt,
    relative_mse,
)
from .dyson import DoublyRegularScaling, normalize_factor_pair, sinkhorn
from .equalizer import EtaPolicy, ScalingFactors, equalize
from .errors import InfeasibleSupport, InvalidInput

SIGNAL_STREAM = 1
VARIANCE_STREAM = 2
NOISE_STREAM = 3


def rng_for(seed, trial=0, stream=0):
    """Independent generator for one (seed, trial, stream) triple."""
    if seed < 0 or trial < 0 or stream < 0:
        raise InvalidInput("seed, trial and stream must be nonnegative integers")
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), int(stream)]))


def _threads():
    try:
        return max(1, int(os.environ.get("DYSON_EQ_THREADS", "1")))
    except ValueError:
        return 1


def _map_trials(fn, items):
    workers = min(_threads(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# signals


@dataclass(frozen=True)
class Delocalized:
    """Singular vectors spread over all rows and columns."""


@dataclass(frozen=True)
class SparseSupport:
    """Singular vectors supported on a random fraction of rows and columns."""

    row_frac: float = 0.5
    col_frac: float = 0.5

    def __post_init__(self):
        if not (0 < self.row_frac <= 1 and 0 < self.col_frac <= 1):
            raise InvalidInput("support fractions must lie in (0, 1]")

    def sizes(self, m, n):
        return math.ceil(self.row_frac * m), math.ceil(self.col_frac * n)


@dataclass(frozen=True)
class PowerSupport:
    """Support of ``ceil(coef * m**exponent)`` rows and ``ceil(coef * n**exponent)`` columns."""

    exponent: float = 0.5
    coef: float = 1.0

    def __post_init__(self):
        if not 0 < self.exponent <= 1:
            raise InvalidInput("exponent must lie in (0, 1]")
        if not self.coef > 0:
            raise InvalidInput("coef must be positive")

    def sizes(self, m, n):
        return (min(m, math.ceil(self.coef * m**self.exponent)),
                min(n, math.ceil(self.coef * n**self.exponent)))


Localization = Union[Delocalized, SparseSupport, PowerSupport]


@dataclass(frozen=True)
class SignalSpec:
    """Rank-`r` signal ``U diag(s) V^T`` with orthonormalized Gaussian factors.

    `singular_values` may be a scalar, repeated `r` times.
    """

    m: int
    n: int
    r: int
    singular_values: Tuple[float, ...] = ()
    localization: Localization = field(default_factory=Delocalized)

    def __post_init__(self):
        sv = np.atleast_1d(np.asarray(self.singular_values, dtype=np.float64))
        if sv.size == 1 and self.r != 1:
            sv = np.full(self.r, sv[0])
        object.__setattr__(self, "singular_values", tuple(float(v) for v in sv))
        if not 0 <= self.r <= self.m <= self.n:
            raise InvalidInput(f"need 0 <= r <= m <= n, got r={self.r}, m={self.m}, n={self.n}")
        if len(self.singular_values) != self.r:
            raise InvalidInput(f"expected {self.r} singular values, got {len(self.singular_values)}")
        if any(not (v > 0 and math.isfinite(v)) for v in self.singular_values):
            raise InvalidInput("singular values must be positive and finite")

    def support_sizes(self):
        if isinstance(self.localization, Delocalized):
            return self.m, self.n
        return self.localization.sizes(self.m, self.n)


def _orthonormal_on_support(rng, size, k, r):
    rows = np.sort(rng.choice(size, k, replace=False)) if k < size else np.arange(size)
    q, _ = np.linalg.qr(rng.standard_normal((k, r)))
    out = np.zeros((size, r))
    out[rows] = q
    return out


def gen_signal(spec: SignalSpec, seed, trial=0):
    """Draw ``X = U diag(s) V^T`` with orthonormal `U`, `V` on the requested support.

    Raises
    ------
    InfeasibleSupport
        If the support has fewer rows or columns than the rank.
    """
    if spec.r == 0:
        return np.zeros((spec.m, spec.n))
    km, kn = spec.support_sizes()
    if km < spec.r or kn < spec.r:
        raise InfeasibleSupport(f"support {km} x {kn} cannot carry rank {spec.r}")
    rng = rng_for(seed, trial, SIGNAL_STREAM)
    u = _orthonormal_on_support(rng, spec.m, km, spec.r)
    v = _orthonormal_on_support(rng, spec.n, kn, spec.r)
    return (u * np.asarray(spec.singular_values)) @ v.T


def two_level_singular_values(n, strong=10, weak=10, strong_power=1e3, weak_power=3.0):
    """``strong`` values ``sqrt(strong_power n)`` followed by ``weak`` values ``sqrt(weak_power n)``."""
    return (math.sqrt(strong_power * n),) * strong + (math.sqrt(weak_power * n),) * weak


# --------------------------------------------------------------------------
# variance models


@dataclass(frozen=True)
class RankOneUniform:
    """``S = x y^T`` with entries of x and y uniform on ``[lo, hi]``."""

    lo: float = 1.0
    hi: float = 10.0


@dataclass(frozen=True)
class OutlierRowsCols:
    """Unit variance except the last rows and columns, amplified by the given factors."""

    k_rows: int = 5
    k_cols: int = 5
    row_amp: float = 10.0
    col_amp: float = 100.0


@dataclass(frozen=True)
class LogNormalLowRank:
    """``S = A B`` with inner dimension `inner_rank` and entries ``exp(t * N(0, 1))``."""

    inner_rank: int = 10
    t: float = 2.0


@dataclass(frozen=True)
class BernoulliDR:
    """``diag(x) S~ diag(y)`` with S~ the double centering of ``scale (Bernoulli(p) - p)``.

    Draws with a nonpositive entry in S~ are rejected and redrawn.
    """

    p: float = 0.1
    scale: float = 5.0
    lo: float = 1.0
    hi: float = 10.0
    max_tries: int = 1000


@dataclass(frozen=True)
class BlockDR:
    """Block-constant version of :class:`BernoulliDR` with `M` x `N` blocks.

    Row and column factors are constant on blocks too.
    """

    M: int = 10
    N: int = 10
    p: float = 0.1
    scale: float = 5.0
    lo: float = 1.0
    hi: float = 10.0
    max_tries: int = 1000


VarianceModel = Union[RankOneUniform, OutlierRowsCols, LogNormalLowRank, BernoulliDR, BlockDR]


@dataclass(frozen=True)
class VarianceSpec:
    """A variance model and the mean entry S is rescaled to (None keeps it as drawn)."""

    model: VarianceModel
    normalize_mean_to: Optional[float] = 1.0


@dataclass(frozen=True)
class VarianceDraw:
    s: np.ndarray
    truth: ScalingFactors
    scaling: DoublyRegularScaling
    rejections: int = 0


def _double_center(z, wr=None, wc=None):
    """``1 + z - row means - column means + grand mean``, optionally weighted."""
    m, n = z.shape
    wr = np.full(m, 1.0 / m) if wr is None else wr / wr.sum()
    wc = np.full(n, 1.0 / n) if wc is None else wc / wc.sum()
    col = wr @ z
    row = z @ wc
    return 1.0 + z - row[:, None] - col[None, :] + wr @ z @ wc


def _centered_bernoulli(rng, shape, model, wr=None, wc=None):
    for attempt in range(model.max_tries):
        z = model.scale * ((rng.random(shape) < model.p) - model.p)
        s_tilde = _double_center(z, wr, wc)
        if np.all(s_tilde > 0):
            return s_tilde, attempt
    raise InvalidInput(f"no positive draw in {model.max_tries} tries; the matrix is too small")


def _draw_variance(model, m, n, rng):
    if isinstance(model, RankOneUniform):
        x = rng.uniform(model.lo, model.hi, m)
        y = rng.uniform(model.lo, model.hi, n)
        return np.outer(x, y), 0
    if isinstance(model, OutlierRowsCols):
        if model.k_rows > m or model.k_cols > n:
            raise InvalidInput("more outlier rows or columns than the matrix has")
        x = np.ones(m)
        y = np.ones(n)
        x[m - model.k_rows:] = model.row_amp
        y[n - model.k_cols:] = model.col_amp
        return np.outer(x, y), 0
    if isinstance(model, LogNormalLowRank):
        a = np.exp(model.t * rng.standard_normal((m, model.inner_rank)))
        b = np.exp(model.t * rng.standard_normal((model.inner_rank, n)))
        return a @ b, 0
    if isinstance(model, BernoulliDR):
        s_tilde, rejected = _centered_bernoulli(rng, (m, n), model)
        x = rng.uniform(model.lo, model.hi, m)
        y = rng.uniform(model.lo, model.hi, n)
        return x[:, None] * s_tilde * y[None, :], rejected
    if isinstance(model, BlockDR):
        if not (1 <= model.M <= m and 1 <= model.N <= n):
            raise InvalidInput("block counts must lie between 1 and the matrix size")
        rows = np.array_split(np.arange(m), model.M)
        cols = np.array_split(np.arange(n), model.N)
        wr = np.array([len(b) for b in rows], dtype=np.float64)
        wc = np.array([len(b) for b in cols], dtype=np.float64)
        s_bar, rejected = _centered_bernoulli(rng, (model.M, model.N), model, wr, wc)
        x_bar = rng.uniform(model.lo, model.hi, model.M)
        y_bar = rng.uniform(model.lo, model.hi, model.N)
        ri = np.repeat(np.arange(model.M), wr.astype(int))
        ci = np.repeat(np.arange(model.N), wc.astype(int))
        return (x_bar[ri, None] * s_bar[np.ix_(ri, ci)] * y_bar[None, ci]), rejected
    raise InvalidInput(f"unknown variance model {model!r}")


def gen_variance(spec: VarianceSpec, m, n, seed, trial=0, eta=None) -> VarianceDraw:
    """Draw a variance matrix and its true scaling factors.

    The truth comes from Sinkhorn scaling. With `eta` it is further
    normalized so that ``x^T h1 = y^T h2`` at that eta; otherwise it keeps
    the equal-geometric-mean convention.
    """
    rng = rng_for(seed, trial, VARIANCE_STREAM)
    s, rejected = _draw_variance(spec.model, m, n, rng)
    if spec.normalize_mean_to is not None:
        if not spec.normalize_mean_to > 0:
            raise InvalidInput("normalize_mean_to must be positive")
        s = s * (spec.normalize_mean_to / s.mean())
    dr = sinkhorn(s)
    truth = dr.factors() if eta is None else normalize_factor_pair(dr.x0, dr.y0, eta)
    return VarianceDraw(s, truth, dr, rejected)


def gen_noise(s, dist="gaussian", seed=0, trial=0):
    """Independent zero-mean noise with entrywise variance `s`."""
    if dist != "gaussian":
        raise InvalidInput(f"unsupported noise distribution {dist!r}")
    s = np.asarray(s, dtype=np.float64)
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise InvalidInput("variance matrix must be strictly positive and finite")
    rng = rng_for(seed, trial, NOISE_STREAM)
    return rng.standard_normal(s.shape) * np.sqrt(s)


# --------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class Instance:
    """One draw of ``Y = X + E`` with ``Var(E_ij) = S_ij``."""

    y: np.ndarray
    x_signal: np.ndarray
    s: np.ndarray
    scaling: DoublyRegularScaling
    seed: int
    trial: int = 0
    rejections: int = 0

    @property
    def noise(self):
        return self.y - self.x_signal

    def truth(self, eta):
        """True factors normalized at `eta` (use the eta that equalize picked)."""
        return normalize_factor_pair(self.scaling.x0, self.scaling.y0, eta)


def make_instance(signal: SignalSpec, variance: VarianceSpec, seed, trial=0) -> Instance:
    draw = gen_variance(variance, signal.m, signal.n, seed, trial)
    x = gen_signal(signal, seed, trial)
    e = gen_noise(draw.s, "gaussian", seed, trial)
    return Instance(x + e, x, draw.s, draw.scaling, int(seed), int(trial), draw.rejections)


def max_relative_errors(estimate: ScalingFactors, truth: ScalingFactors):
    """``(|(x^ - x)/x|_inf, |(y^ - y)/y|_inf)``."""
    ex = float(np.max(np.abs(estimate.x - truth.x) / truth.x))
    ey = float(np.max(np.abs(estimate.y - truth.y) / truth.y))
    return ex, ey


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class ConvergenceConfig:
    """Factor-estimation error versus n.

    ``m = ceil(m_coef * n)`` and the `signal_rank` signal singular values
    satisfy ``s^2 / n = signal_power * n**signal_exponent``.
    """

    variance: VarianceSpec
    ns: Sequence[int] = (500, 2000)
    trials: int = 10
    seed: int = 0
    signal_rank: int = 10
    signal_power: float = 10.0
    signal_exponent: float = 0.0
    m_coef: float = 0.5
    policy: EtaPolicy = EtaPolicy()


@dataclass
class ConvergenceTable:
    rows: list
    summary: list

    def median(self, n):
        for row in self.summary:
            if row["n"] == n:
                return row["median_err_x"], row["median_err_y"]
        raise KeyError(n)


def convergence_trial(cfg: ConvergenceConfig, n, trial):
    m = math.ceil(cfg.m_coef * n)
    s_val = math.sqrt(cfg.signal_power * n ** (1.0 + cfg.signal_exponent))
    signal = SignalSpec(m, n, cfg.signal_rank, (s_val,) * cfg.signal_rank)
    # each n gets its own stream so adding sizes does not shift the others
    inst = make_instance(signal, cfg.variance, cfg.seed, trial=trial * 1_000_003 + n)
    res = equalize(inst.y, cfg.policy)
    ex, ey = max_relative_errors(res.factors, inst.truth(res.eta))
    return {"n": n, "m": m, "trial": trial, "eta": res.eta, "err_x": ex, "err_y": ey,
            "rejections": inst.rejections}


def run_convergence_sweep(cfg: ConvergenceConfig) -> ConvergenceTable:
    """Per-trial and median maximal relative errors of the estimated factors."""
    jobs = [(n, t) for n in cfg.ns for t in range(cfg.trials)]
    rows = _map_trials(lambda job: convergence_trial(cfg, *job), jobs)
    summary = []
    for n in cfg.ns:
        sel = [r for r in rows if r["n"] == n]
        summary.append({
            "n": n,
            "median_err_x": float(np.median([r["err_x"] for r in sel])),
            "median_err_y": float(np.median([r["err_y"] for r in sel])),
            "trials": len(sel),
        })
    return ConvergenceTable(rows, summary)


MSE_METHODS = (EQUALIZED_SVT, ORACLE_SVT, ORACLE_SHRINKAGE)


@dataclass(frozen=True)
class MseConfig:
    """Relative MSE of denoisers versus heteroskedasticity `t` or signal level.

    ``control`` is ``"t"`` (values are t, signal fixed at
    ``s = s_over_sqrt_n * sqrt(n)``) or ``"s"`` (values are ``s / sqrt(n)``,
    t fixed).
    """

    control: str = "t"
    values: Sequence[float] = (0.0, 2.0)
    m: int = 1000
    n: int = 2000
    r: int = 20
    localization: Localization = SparseSupport(0.5, 0.5)
    inner_rank: int = 30
    t: float = 2.0
    s_over_sqrt_n: float = 3.0
    trials: int = 5
    seed: int = 0
    methods: Sequence[str] = MSE_METHODS
    policy: EtaPolicy = EtaPolicy()

    def __post_init__(self):
        if self.control not in ("t", "s"):
            raise InvalidInput(f"control must be 't' or 's', got {self.control!r}")
        unknown = set(self.methods) - set(MSE_METHODS)
        if unknown:
            raise InvalidInput(f"unknown methods {sorted(unknown)}")


@dataclass
class MseTable:
    rows: list
    summary: list

    def mean(self, value, method):
        for row in self.summary:
            if row["value"] == value and row["method"] == method:
                return row["mean_rel_mse"]
        raise KeyError((value, method))


def mse_trial(cfg: MseConfig, idx, value, trial):
    t = value if cfg.control == "t" else cfg.t
    level = cfg.s_over_sqrt_n if cfg.control == "t" else value
    signal = SignalSpec(cfg.m, cfg.n, cfg.r, (level * math.sqrt(cfg.n),) * cfg.r, cfg.localization)
    variance = VarianceSpec(LogNormalLowRank(cfg.inner_rank, t))
    inst = make_instance(signal, variance, cfg.seed, trial=trial * 1_000_003 + idx)
    out = []
    for method in cfg.methods:
        if method == EQUALIZED_SVT:
            res = denoise_equalized(inst.y, cfg.policy)
        elif method == ORACLE_SVT:
            res = oracle_svt(inst.y, inst.x_signal)
        else:
            res = oracle_shrinkage(inst.y, inst.x_signal)
        out.append({"value": value, "trial": trial, "method": method, "r_used": res.r_used,
                    "rel_mse": relative_mse(res.x_bar, inst.x_signal)})
    return out


def run_mse_sweep(cfg: MseConfig) -> MseTable:
    """Per-trial and mean relative MSE for each control value and method."""
    jobs = [(i, v, t) for i, v in enumerate(cfg.values) for t in range(cfg.trials)]
    rows = [row for chunk in _map_trials(lambda job: mse_trial(cfg, *job), jobs) for row in chunk]
    summary = []
    for v in cfg.values:
        for method in cfg.methods:
            sel = [r["rel_mse"] for r in rows if r["value"] == v and r["method"] == method]
            summary.append({"value": v, "method": method, "mean_rel_mse": float(np.mean(sel)),
                            "trials": len(sel)})
    return MseTable(rows, summary)
