import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyson_equalizer.dyson import (
    DysonSolution,
    doubly_regular_residual,
    dyson_residual,
    factors_from_g,
    incoherence_bound,
    incoherence_diagnostics,
    naive_resolvent_diagonal,
    normalize_factor_pair,
    sinkhorn,
    solve_dyson,
    solve_dyson_rank_one,
)
from dyson_equalizer.equalizer import DYSON_NORMALIZED, SINKHORN_GEO_MEAN
from dyson_equalizer.errors import DegenerateMatrix, InvalidInput, NoConvergence, TooLarge
from dyson_equalizer.simulate import BernoulliDR, VarianceSpec, gen_variance


def homoskedastic_g(sigma2, eta):
    """Positive root of sigma2 g^2 + eta g - 1 = 0."""
    return (-eta + math.sqrt(eta * eta + 4 * sigma2)) / (2 * sigma2)


def g_bounds_hold(s, sol):
    c = max(s.shape) * s.max()
    lo = 1.0 / (sol.eta + c / sol.eta)
    g = sol.g
    return bool(np.all(g > lo) and np.all(g < 1.0 / sol.eta))


def random_rank_one(seed, m, n, mean=None):
    r = np.random.default_rng(seed)
    x, y = r.uniform(1, 10, m), r.uniform(1, 10, n)
    if mean is not None:
        c = mean / (x.mean() * y.mean())
        x = x * c
    return x, y


class TestSolveDyson:
    def test_homoskedastic_closed_form(self):
        n = 40
        sol = solve_dyson(np.full((n, n), 1.0 / n), 1.0)
        np.testing.assert_allclose(sol.g, (math.sqrt(5) - 1) / 2, atol=1e-11)
        assert sol.residual < 1e-10

    @pytest.mark.parametrize("sigma2,eta", [(2.0, 0.5), (0.3, 3.0)])
    def test_homoskedastic_other_levels(self, sigma2, eta):
        n = 25
        sol = solve_dyson(np.full((n, n), sigma2 / n), eta)
        np.testing.assert_allclose(sol.g, homoskedastic_g(sigma2, eta), rtol=1e-10)

    def test_small_noise_limit(self):
        n, eta = 10, 2.0
        sol = solve_dyson(np.full((n, n), 1e-12 / n), eta)
        np.testing.assert_allclose(sol.g, 1 / eta, rtol=1e-11)

    def test_random_rank_one_round_trip(self):
        x0, y0 = random_rank_one(1, 20, 30, mean=1.0 / 30)
        eta = 0.8
        truth = normalize_factor_pair(x0, y0, eta)
        s = np.outer(truth.x, truth.y)
        sol = solve_dyson(s, eta)
        assert sol.residual < 1e-10
        assert g_bounds_hold(s, sol)
        back = factors_from_g(sol, 20, 30)
        assert back.convention == DYSON_NORMALIZED
        np.testing.assert_allclose(back.x, truth.x, rtol=1e-8)
        np.testing.assert_allclose(back.y, truth.y, rtol=1e-8)

    def test_no_convergence(self):
        s = np.random.default_rng(0).uniform(0.1, 1, (5, 7))
        with pytest.raises(NoConvergence) as info:
            solve_dyson(s, 1.0, max_iter=3)
        assert info.value.max_iter == 3 and info.value.last_residual > 0

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(InvalidInput):
            solve_dyson(np.full((2, 2), bad), 1.0)
        with pytest.raises(InvalidInput):
            solve_dyson(np.ones((2, 2)), bad)


class TestRankOne:
    def test_homoskedastic(self):
        n = 30
        v = np.full(n, 1.0 / math.sqrt(n))
        sol = solve_dyson_rank_one(v, v, 1.0)
        np.testing.assert_allclose(sol.g, (math.sqrt(5) - 1) / 2, rtol=1e-12)

    def test_agrees_with_general_solver(self):
        m, n, eta = 50, 100, 1.0
        x, y = random_rank_one(2, m, n, mean=1.0 / n)
        h = solve_dyson_rank_one(x, y, eta)
        g = solve_dyson(np.outer(x, y), eta)
        assert np.max(np.abs(h.g - g.g)) < 1e-10

    def test_one_by_one_against_bisection(self):
        x, y, eta = 3.0, 0.7, 0.9

        def excess(h1):
            h2 = 1.0 / (eta + y * x * h1)
            return 1.0 / h1 - eta - x * y * h2

        lo, hi = 1e-300, 1.0 / eta
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if excess(mid) > 0 else (lo, mid)
        sol = solve_dyson_rank_one([x], [y], eta)
        assert sol.g1[0] == pytest.approx(0.5 * (lo + hi), rel=1e-12)
        assert sol.g2[0] == pytest.approx(1.0 / (eta + x * y * sol.g1[0]), rel=1e-12)

    def test_rejects_bad_vectors(self):
        with pytest.raises(InvalidInput):
            solve_dyson_rank_one([1.0, -1.0], [1.0], 1.0)
        with pytest.raises(InvalidInput):
            solve_dyson_rank_one([], [1.0], 1.0)


class TestSinkhorn:
    def test_all_ones(self):
        dr = sinkhorn(np.ones((3, 5)))
        np.testing.assert_allclose(dr.x0, 1.0)
        np.testing.assert_allclose(dr.y0, 1.0)
        np.testing.assert_allclose(dr.s_tilde, 1.0)

    def test_rank_one(self):
        a, b = np.array([1.0, 2.0, 5.0]), np.array([3.0, 1.0, 4.0, 2.0])
        dr = sinkhorn(np.outer(a, b))
        np.testing.assert_allclose(dr.s_tilde, 1.0, atol=1e-12)
        np.testing.assert_allclose(dr.x0 / a, (dr.x0 / a)[0], rtol=1e-12)
        np.testing.assert_allclose(dr.y0 / b, (dr.y0 / b)[0], rtol=1e-12)
        assert dr.factors().convention == SINKHORN_GEO_MEAN
        assert np.mean(np.log(dr.x0)) == pytest.approx(np.mean(np.log(dr.y0)), abs=1e-12)

    def test_random_residual(self):
        s = np.random.default_rng(3).uniform(0.1, 5.0, (10, 15))
        dr = sinkhorn(s)
        assert dr.dr_residual < 1e-10
        assert doubly_regular_residual(dr.s_tilde) == dr.dr_residual
        np.testing.assert_allclose(dr.x0[:, None] * dr.s_tilde * dr.y0[None, :], s, rtol=1e-13)

    def test_no_convergence(self):
        s = np.random.default_rng(3).uniform(0.01, 50.0, (10, 15))
        with pytest.raises(NoConvergence):
            sinkhorn(s, max_iter=1)


class TestNormalizeFactorPair:
    def test_symmetric_pair_unchanged(self):
        v = np.random.default_rng(4).uniform(0.1, 1, 8)
        f = normalize_factor_pair(v, v, 1.0)
        np.testing.assert_allclose(f.x, v, rtol=1e-14)
        np.testing.assert_allclose(f.y, v, rtol=1e-14)

    def test_split_invariance(self):
        x0, y0 = random_rank_one(5, 12, 20)
        a = normalize_factor_pair(x0, y0, 2.0)
        b = normalize_factor_pair(2 * x0, y0 / 2, 2.0)
        np.testing.assert_allclose(a.x, b.x, rtol=1e-12)
        np.testing.assert_allclose(a.y, b.y, rtol=1e-12)

    def test_normalization_holds(self):
        x0, y0 = random_rank_one(6, 12, 20, mean=1.0 / 20)
        f = normalize_factor_pair(x0, y0, 0.5)
        h = solve_dyson_rank_one(f.x, f.y, 0.5)
        assert abs(f.x @ h.g1 - f.y @ h.g2) < 1e-12


class TestFactorsFromG:
    def test_bound_is_degenerate(self):
        sol = DysonSolution(np.full(3, 2.0), np.full(4, 2.0), 0.5, 0.0, 0)
        with pytest.raises(DegenerateMatrix):
            factors_from_g(sol)

    def test_shape_check(self):
        sol = DysonSolution(np.full(3, 0.5), np.full(4, 0.5), 1.0, 0.0, 0)
        with pytest.raises(InvalidInput):
            factors_from_g(sol, 4, 4)

    def test_homoskedastic_is_constant(self):
        n = 16
        sol = solve_dyson(np.full((n, n), 1.0 / n), 1.0)
        f = factors_from_g(sol)
        np.testing.assert_allclose(f.x, f.x[0], rtol=1e-10)
        np.testing.assert_allclose(f.y, f.y[0], rtol=1e-10)
        np.testing.assert_allclose(f.x, 1 / math.sqrt(n), rtol=1e-9)


class TestNaiveResolvent:
    def test_scalar(self):
        g = naive_resolvent_diagonal([[2.0]], 1.0)
        np.testing.assert_allclose([g.g1[0], g.g2[0]], [0.2, 0.2], rtol=1e-14)

    def test_zero_matrix(self):
        g = naive_resolvent_diagonal(np.zeros((2, 3)), 4.0)
        np.testing.assert_allclose(np.concatenate([g.g1, g.g2]), 0.25)

    def test_too_large(self):
        with pytest.raises(TooLarge):
            naive_resolvent_diagonal(np.ones((1000, 1001)), 1.0)


class TestIncoherence:
    def test_rank_one_has_zero_bound(self):
        x, y = random_rank_one(7, 15, 25, mean=1.0 / 25)
        d = incoherence_diagnostics(np.outer(x, y), 1.0)
        assert d.bound == pytest.approx(0.0, abs=1e-9)
        assert d.gap < 1e-9
        np.testing.assert_allclose(d.w1, d.factors.x * solve_dyson_rank_one(
            d.factors.x, d.factors.y, 1.0).g1)

    def test_bernoulli_gap_small(self):
        draw = gen_variance(VarianceSpec(BernoulliDR(), normalize_mean_to=1.0 / 400), 200, 400, seed=3)
        d = incoherence_diagnostics(draw.s, 1.0)
        assert 0 <= d.gap < 0.1
        assert d.bound > 0

    def test_constant_factors_with_doubly_regular_s(self):
        m, n = 30, 50
        z = np.random.default_rng(4).uniform(-0.3, 0.3, (m, n))
        s_tilde = 1 + z - z.mean(0) - z.mean(1)[:, None] + z.mean()
        assert doubly_regular_residual(s_tilde) < 1e-14
        d = incoherence_diagnostics(2.0 * s_tilde / n, 1.0)
        assert d.gap < 1e-8

    def test_bound_formula(self):
        s_tilde = np.array([[1.5, 0.5], [0.5, 1.5]])
        w1, w2 = np.array([1.0, 2.0]), np.array([1.0, 3.0])
        v2 = (w2 - 2.0) / math.sqrt(10)
        v1 = (w1 - 1.5) / math.sqrt(5)
        d = s_tilde - 1
        expected = max(np.max(np.abs(d @ v2)) / math.sqrt(2), math.sqrt(2) / 2 * np.max(np.abs(d.T @ v1)))
        assert incoherence_bound(s_tilde, w1, w2) == pytest.approx(expected, rel=1e-14)


def test_g_bounds_on_random_matrices():
    r = np.random.default_rng(8)
    for _ in range(20):
        m = int(r.integers(1, 20))
        n = int(r.integers(m, 30))
        s = r.uniform(0.01, 3.0, (m, n)) / n
        eta = float(r.choice([0.5, 1.0, 3.0]))
        sol = solve_dyson(s, eta)
        assert sol.residual < 1e-10
        assert dyson_residual(s, sol.g1, sol.g2, eta) == sol.residual
        assert g_bounds_hold(s, sol)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 15), st.integers(1, 20), st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_sinkhorn_absorbs_row_scaling(m, n, seed, c):
    r = np.random.default_rng(seed)
    s = r.uniform(0.1, 2.0, (m, n))
    d = r.uniform(0.5, 2.0, m) * c
    a, b = sinkhorn(s), sinkhorn(d[:, None] * s)
    np.testing.assert_allclose(b.s_tilde, a.s_tilde, rtol=1e-9)
    # x0 absorbs the scaling up to the scalar split
    ratio = (b.x0 / a.x0) / d
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)
    np.testing.assert_allclose(b.x0[:, None] * b.y0[None, :], d[:, None] * a.x0[:, None] * a.y0[None, :],
                               rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 25), st.integers(1, 25), st.integers(0, 2**32 - 1), st.floats(0.05, 5))
def test_w_vectors_preserve_ranking(m, n, seed, eta):
    x, y = random_rank_one(seed, m, n, mean=1.0 / max(m, n))
    f = normalize_factor_pair(x, y, eta)
    h = solve_dyson_rank_one(f.x, f.y, eta)
    for v, hv in ((f.x, h.g1), (f.y, h.g2)):
        w = v * hv
        dv = v[:, None] - v[None, :]
        dw = w[:, None] - w[None, :]
        assert np.all(np.sign(dw) == np.sign(dv))
        assert np.all(np.abs(dw) / w[None, :] <= np.abs(dv) / v[None, :] * (1 + 1e-12) + 1e-15)


@pytest.mark.parametrize("n", [500, 1000, 2000, 4000])
def test_factor_magnitudes_scale_with_dimensions(n):
    m = n // 2
    x0, y0 = random_rank_one(n, m, n, mean=1.0 / n)
    f = normalize_factor_pair(x0, y0, 1.0)
    a = math.sqrt(m) * f.x
    b = n / math.sqrt(m) * f.y
    assert 1e-3 <= a.min() and a.max() <= 1e3
    assert 1e-3 <= b.min() and b.max() <= 1e3
