"""Named simulation setups used by ``dyson-eq simulate``.

Each preset takes ``(seed, trials, **params)`` and returns a dict of tables
(name -> list of row dicts) plus a summary dict for the report.
"""
import math

import numpy as np

from .equalizer import equalize
from .simulate import (
    BernoulliDR,
    ConvergenceConfig,
    LogNormalLowRank,
    MseConfig,
    OutlierRowsCols,
    RankOneUniform,
    SignalSpec,
    SparseSupport,
    VarianceSpec,
    make_instance,
    run_convergence_sweep,
    run_mse_sweep,
    two_level_singular_values,
)
from .spectrum import MpParams, covariance_eigenvalues, esd, estimate_rank, ks_distance, mp_edges


def _spectra(signal, variance, seed, trials):
    eig_rows, trial_rows = [], []
    p = MpParams.for_shape(signal.m, signal.n)
    beta_plus = mp_edges(p)[1]
    for t in range(trials):
        inst = make_instance(signal, variance, seed, t)
        before = covariance_eigenvalues(inst.y)[::-1]
        res = equalize(inst.y)
        after = covariance_eigenvalues(res.y_hat)[::-1]
        noise_after = covariance_eigenvalues(
            inst.noise / np.sqrt(res.factors.x)[:, None] / np.sqrt(res.factors.y)[None, :])
        for k, (b, a) in enumerate(zip(before, after)):
            eig_rows.append({"trial": t, "index": k + 1, "before": b, "after": a})
        trial_rows.append({
            "trial": t,
            "above_edge_before": int(np.sum(before > beta_plus)),
            "above_edge_after": estimate_rank(res.y_hat).r_hat,
            "ks_before": ks_distance(esd(before), p),
            "ks_after": ks_distance(esd(after), p),
            "ks_noise_after": ks_distance(esd(noise_after), p),
            "lambda_max_noise_after": float(noise_after[-1]),
        })
    return {"eigenvalues": eig_rows, "trials": trial_rows}, {"beta_plus": beta_plus}


def fig1_outliers(seed, trials, m=1000, n=2000):
    signal = SignalSpec(m, n, 20, two_level_singular_values(n))
    return _spectra(signal, VarianceSpec(OutlierRowsCols(), normalize_mean_to=None), seed, trials)


def fig2_lognormal(seed, trials, m=1000, n=2000, inner_rank=10, t=2.0):
    signal = SignalSpec(m, n, 20, two_level_singular_values(n))
    return _spectra(signal, VarianceSpec(LogNormalLowRank(inner_rank, t)), seed, trials)


def _convergence(variance, seed, trials, ns, signal_exponent):
    cfg = ConvergenceConfig(variance, ns=tuple(int(v) for v in ns), trials=trials, seed=seed,
                            signal_exponent=signal_exponent)
    table = run_convergence_sweep(cfg)
    return {"trials": table.rows, "summary": table.summary}, {"ns": list(cfg.ns)}


def fig3_rankone(seed, trials, ns=(500, 1000, 2000), signal_exponent=0.0):
    return _convergence(VarianceSpec(RankOneUniform()), seed, trials, ns, signal_exponent)


def fig4_bernoulli(seed, trials, ns=(500, 1000, 2000), signal_exponent=0.0):
    return _convergence(VarianceSpec(BernoulliDR()), seed, trials, ns, signal_exponent)


def fig5_ranksweep(seed, trials, m=1000, n=2000, r=10, inner_rank=30, t=2.0, top=20):
    signal = SignalSpec(m, n, r, math.sqrt(10 * n))
    variance = VarianceSpec(LogNormalLowRank(inner_rank, t))
    sv_rows, trial_rows = [], []
    for k in range(trials):
        inst = make_instance(signal, variance, seed, k)
        raw = np.linalg.svd(inst.y, compute_uv=False)
        est = estimate_rank(equalize(inst.y).y_hat)
        normalized = est.exceed_margins + est.threshold
        for i in range(min(top, raw.size)):
            sv_rows.append({"trial": k, "index": i + 1, "raw": raw[i], "normalized": normalized[i]})
        trial_rows.append({"trial": k, "r_hat": est.r_hat, "threshold": est.threshold})
    return {"singular_values": sv_rows, "trials": trial_rows}, {"r": r}


def fig7_mse(seed, trials, control="t", values=(0.0, 1.0, 2.0), m=1000, n=2000, r=20,
             t=2.0, s_over_sqrt_n=3.0):
    cfg = MseConfig(control=control, values=tuple(float(v) for v in values), m=m, n=n, r=r,
                    localization=SparseSupport(0.5, 0.5), t=t, s_over_sqrt_n=s_over_sqrt_n,
                    trials=trials, seed=seed)
    table = run_mse_sweep(cfg)
    return {"trials": table.rows, "summary": table.summary}, {"control": control}


PRESETS = {
    "fig1-outliers": fig1_outliers,
    "fig2-lognormal": fig2_lognormal,
    "fig3-rankone": fig3_rankone,
    "fig4-bernoulli": fig4_bernoulli,
    "fig5-ranksweep": fig5_ranksweep,
    "fig7-mse": fig7_mse,
}
