"""Row and column normalization of noisy matrices under heteroskedastic noise.

The core entry point is :func:`equalize`; :func:`estimate_rank` and
:func:`denoise_equalized` build on it. Reference solvers that need the true
noise variance live in :mod:`dyson_equalizer.dyson`, and seeded generators
in :mod:`dyson_equalizer.simulate`.
"""
__version__ = "0.1.0"

from .denoise import (
    DenoiseResult,
    denoise_equalized,
    oracle_shrinkage,
    oracle_svt,
    relative_mse,
    truncate_svd,
    weighted_loss,
)
from .dyson import (
    DoublyRegularScaling,
    DysonSolution,
    IncoherenceDiagnostics,
    factors_from_g,
    incoherence_diagnostics,
    naive_resolvent_diagonal,
    normalize_factor_pair,
    sinkhorn,
    solve_dyson,
    solve_dyson_rank_one,
)
from .equalizer import (
    EqualizeResult,
    EtaPolicy,
    ResolventDiagonal,
    ScalingFactors,
    equalize,
    estimate_factors,
    resolvent_diagonal,
)
from .errors import (
    DegenerateMatrix,
    DysonEqualizerError,
    EmptyInput,
    InfeasibleSupport,
    InvalidInput,
    NoConvergence,
    NumericalFailure,
    ParseError,
    RankOutOfRange,
    ShapeMismatch,
    TooLarge,
    ZeroRowOrColumn,
)
from .linalg import SvdFactors, complex_shift_solve, thin_svd
from .spectrum import (
    Esd,
    MpParams,
    RankEstimate,
    esd,
    estimate_rank,
    ks_distance,
    mp_cdf,
    mp_edges,
    snr_gain_tau,
)
