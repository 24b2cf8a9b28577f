import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from auxmi import numstat
from auxmi.errors import (ConfigurationError, DegenerateColumnError, InsufficientDataError,
                          NotPSDError, SingularDesignError)
from auxmi.numstat import RngStream, hash64


def gen(k=0):
    return RngStream(12345, k).generator()


class TestRngStream:
    def test_same_ids_same_draws(self):
        a = RngStream(7, 3).generator().standard_normal(50)
        b = RngStream(7, 3).generator().standard_normal(50)
        assert np.array_equal(a, b)

    def test_distinct_ids_distinct_draws(self):
        a = RngStream(7, 3).generator().standard_normal(50)
        b = RngStream(7, 4).generator().standard_normal(50)
        assert not np.array_equal(a, b)

    def test_hash64_stable_and_order_sensitive(self):
        assert hash64("Basic", "Full", 0, "gen") == hash64("Basic", "Full", 0, "gen")
        assert hash64("Basic", "Full", 0, "gen") != hash64("Basic", "Full", 0, "miss")
        assert hash64("a", "b") != hash64("b", "a")
        assert 0 <= hash64("x") < 2**64


class TestMvnSample:
    def test_zero_variance(self):
        out = numstat.mvn_sample([0.0], [[0.0]], 3, gen())
        assert out.shape == (3, 1)
        assert np.all(out == 0.0)

    def test_identity_covariance(self):
        out = numstat.mvn_sample(np.zeros(2), np.eye(2), 100_000, gen(1))
        assert np.all(np.abs(np.cov(out, rowvar=False) - np.eye(2)) <= 0.02)

    def test_basic_shape(self):
        out = numstat.mvn_sample(np.zeros(17), np.eye(17), 1000, gen(2))
        assert out.shape == (1000, 17)

    def test_nonsymmetric_rejected(self):
        with pytest.raises(ConfigurationError):
            numstat.mvn_sample(np.zeros(2), [[1.0, 0.5], [0.2, 1.0]], 5, gen())

    def test_not_psd_rejected(self):
        with pytest.raises(NotPSDError):
            numstat.mvn_sample(np.zeros(2), [[1.0, 2.0], [2.0, 1.0]], 5, gen())

    def test_tiny_negative_eigenvalue_clamped(self):
        cov = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-9 * np.eye(2)
        out = numstat.mvn_sample(np.zeros(2), cov, 1000, gen(3))
        assert np.allclose(out[:, 0], out[:, 1], atol=1e-3)


class TestOls:
    def test_constant_response(self):
        fit = numstat.ols_fit(np.ones((3, 1)), [2.0, 2.0, 2.0])
        assert fit.coefficients[0] == pytest.approx(2.0)
        assert fit.residual_variance == pytest.approx(0.0, abs=1e-25)
        assert fit.residual_df == 2

    def test_exact_fit(self):
        X = np.array([[1, 0], [0, 1], [1, 1], [2, 1]], dtype=float)
        fit = numstat.ols_fit(X, X @ [1.5, -2.0])
        assert fit.residual_variance < 1e-20
        assert np.allclose(fit.coefficients, [1.5, -2.0])

    def test_slope_matches_normal_equations(self):
        rng = gen(4)
        x = rng.standard_normal(1000)
        y = 0.3 * x + rng.standard_normal(1000)
        X = np.column_stack([np.ones(1000), x])
        fit = numstat.ols_fit(X, y)
        # hand-rolled normal equations oracle
        beta = np.linalg.solve(X.T @ X, X.T @ y)
        s2 = np.sum((y - X @ beta) ** 2) / 998
        se = np.sqrt(s2 * np.diag(np.linalg.inv(X.T @ X)))
        assert np.allclose(fit.coefficients, beta, atol=1e-10)
        assert np.allclose(fit.std_errors, se, rtol=1e-8)
        assert abs(fit.coefficients[1] - 0.3) <= 3 * se[1]

    def test_wald_p_values_are_two_sided_t(self):
        rng = gen(5)
        X = np.column_stack([np.ones(40), rng.standard_normal((40, 2))])
        y = X @ [0.1, 0.4, 0.0] + rng.standard_normal(40)
        fit = numstat.ols_fit(X, y)
        tstat = fit.coefficients / fit.std_errors
        assert np.allclose(fit.wald_p_values, 2 * stats.t.sf(np.abs(tstat), 37))

    def test_rank_deficient_names_column(self):
        rng = gen(6)
        a = rng.standard_normal(20)
        X = np.column_stack([np.ones(20), a, 2 * a])
        with pytest.raises(SingularDesignError) as info:
            numstat.ols_fit(X, rng.standard_normal(20))
        assert info.value.column in (1, 2)

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            numstat.ols_fit(np.ones((2, 2)), [1.0, 2.0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(5, 60), st.integers(1, 5))
    def test_residuals_orthogonal_to_design(self, seed, n, q):
        if n <= q + 1:
            return
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, q))
        y = rng.standard_normal(n)
        fit = numstat.ols_fit(X, y)
        resid = y - fit.fitted
        assert np.max(np.abs(X.T @ resid)) < 1e-8 * n


class TestBayesDraw:
    def _fit(self, n=1000):
        rng = gen(7)
        X = np.column_stack([np.ones(n), rng.standard_normal(n)])
        return numstat.ols_fit(X, X @ [1.0, 0.5] + rng.standard_normal(n))

    def test_zero_residual_variance(self):
        X = np.column_stack([np.ones(10), np.arange(10.0)])
        fit = numstat.ols_fit(X, X @ [1.0, 2.0])
        fit.residual_variance = 0.0
        coef, s2 = numstat.bayes_lm_draw(fit, fit.gram_inverse, gen())
        assert s2 == 0.0
        assert np.array_equal(coef, fit.coefficients)

    def test_sigma2_moment(self):
        fit = self._fit()
        assert fit.residual_df == 998
        rng = gen(8)
        draws = np.array([numstat.bayes_lm_draw(fit, fit.gram_inverse, rng)[1] for _ in range(10_000)])
        expected = fit.residual_variance * 998 / 996
        assert abs(draws.mean() / expected - 1) < 0.01

    def test_coef_covariance(self):
        fit = self._fit()
        rng = gen(9)
        pairs = [numstat.bayes_lm_draw(fit, fit.gram_inverse, rng) for _ in range(10_000)]
        coefs = np.array([c for c, _ in pairs])
        s2 = np.mean([s for _, s in pairs])
        target = s2 * fit.gram_inverse
        rel = np.linalg.norm(np.cov(coefs, rowvar=False) - target) / np.linalg.norm(target)
        assert rel < 0.05

    def test_no_residual_df(self):
        fit = numstat.ols_fit(np.ones((3, 1)), [1.0, 2.0, 4.0])
        fit.residual_df = 0
        with pytest.raises(InsufficientDataError):
            numstat.bayes_lm_draw(fit, fit.gram_inverse, gen())

    def test_deterministic(self):
        fit = self._fit(50)
        a = numstat.bayes_lm_draw(fit, fit.gram_inverse, gen(10))
        b = numstat.bayes_lm_draw(fit, fit.gram_inverse, gen(10))
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]


class TestPearson:
    def test_identity(self):
        x = np.arange(10.0)
        assert numstat.pearson_corr(x, x) == pytest.approx(1.0)

    def test_constant_is_undefined(self):
        assert math.isnan(numstat.pearson_corr(np.ones(5), np.arange(5.0)))

    def test_pairwise_complete(self):
        x = np.array([1.0, 2.0, np.nan, 4.0, 5.0])
        y = np.array([2.0, 4.1, 100.0, 7.9, np.nan])
        assert numstat.pearson_corr(x, y) == pytest.approx(np.corrcoef([1, 2, 4], [2, 4.1, 7.9])[0, 1])

    def test_too_few_pairs(self):
        with pytest.raises(InsufficientDataError):
            numstat.pearson_corr([1.0, 2.0, np.nan], [1.0, 3.0, 2.0])

    def test_sampling_accuracy(self):
        out = numstat.mvn_sample(np.zeros(2), [[1, 0.4], [0.4, 1]], 1000, gen(11))
        assert abs(numstat.pearson_corr(out[:, 0], out[:, 1]) - 0.4) <= 0.09

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 100), st.floats(-50, 50))
    def test_symmetric_and_affine_invariant(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(30)
        y = x + rng.standard_normal(30)
        r = numstat.pearson_corr(x, y)
        assert r == pytest.approx(numstat.pearson_corr(y, x), abs=1e-12)
        assert r == pytest.approx(numstat.pearson_corr(a * x + b, y), abs=1e-9)


class TestPca:
    def test_uncorrelated_pair(self):
        data = gen(12).standard_normal((20_000, 2))
        _, frac = numstat.pca(data)
        assert np.allclose(frac, [0.5, 0.5], atol=0.02)

    def test_duplicated_column(self):
        a = gen(13).standard_normal(100)
        _, frac = numstat.pca(np.column_stack([a, a]))
        assert frac[0] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_scores(self):
        data = gen(14).standard_normal((1000, 16))
        scores, frac = numstat.pca(data)
        cov = scores.T @ scores / 999
        assert np.max(np.abs(cov - np.diag(np.diag(cov)))) < 0.03
        assert abs(frac.sum() - 1) < 1e-10
        assert np.all(np.diff(frac) <= 0)

    def test_constant_column(self):
        data = gen(15).standard_normal((50, 3))
        data[:, 1] = 4.0
        with pytest.raises(DegenerateColumnError) as info:
            numstat.pca(data)
        assert info.value.column == 1


class TestDistributions:
    def test_normal_cdf_zero(self):
        assert numstat.normal_cdf(0.0) == 0.5

    def test_t_table_value(self):
        assert numstat.t_quantile(0.975, 10) == pytest.approx(2.228139, abs=5e-7)
        root = optimize.brentq(lambda t: numstat.t_cdf(t, 10) - 0.975, 0, 10, xtol=1e-14)
        assert numstat.t_quantile(0.975, 10) == pytest.approx(root, abs=1e-9)

    def test_round_trip(self):
        assert numstat.t_cdf(numstat.t_quantile(0.9, 5), 5) == pytest.approx(0.9, abs=1e-9)

    def test_infinite_df_is_normal(self):
        assert numstat.t_quantile(0.975, math.inf) == pytest.approx(numstat.normal_quantile(0.975))

    @pytest.mark.parametrize("call", [lambda: numstat.t_cdf(1.0, 0), lambda: numstat.t_quantile(1.0, 5),
                                      lambda: numstat.t_quantile(0.5, -1), lambda: numstat.normal_quantile(0.0)])
    def test_domain_errors(self, call):
        with pytest.raises(ConfigurationError):
            call()

    def test_chisq_draw_positive(self):
        rng = gen(16)
        draws = [numstat.chisq_draw(4, rng) for _ in range(2000)]
        assert min(draws) > 0
        assert np.mean(draws) == pytest.approx(4, rel=0.1)
