"""Independent numerical checks of the core routines.

Each check recomputes a quantity by a route that does not share code with
the routine under test (hand formulas, brute-force Monte Carlo, root finding
on an arbitrary-precision cdf) and reports pass/fail against a fixed
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import optimize

from . import numstat
from .datagen import basic_scenario, generate_complete, impose_missingness, prepare_scenario
from .impute import Estimand, analyze, complete_data_df, draw_imputations, pool_rubin
from .lasso import kkt_residual, lasso_path
from .numstat import RngStream
from .selection import estimate_fmi_proxy

SEED = 20240601


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _rng(k):
    return RngStream(SEED, k).generator()


def check_rubin_pooling() -> CheckResult:
    pooled = pool_rubin([1.0, 2.0], [0.5, 0.5], n_complete_df=1e9)
    # hand computation: b = var(1, 2) = 0.5, t = 0.5 + 1.5 * 0.5, fmi = 0.75 / 1.25
    expected = dict(q_bar=1.5, w=0.5, b=0.5, t_var=1.25, fmi=0.6)
    err = max(abs(getattr(pooled, k) - v) for k, v in expected.items())
    return CheckResult("rubin-pooling", err < 1e-12, f"max abs error {err:.2e}")


def empirical_fmi(data, m: int, rng) -> float:
    Z = np.column_stack([data.x, data.aux])
    Y = draw_imputations(data.y, Z, m, rng)
    est, se = analyze(Y, data.x, Estimand.MeanY)
    return pool_rubin(est, se**2, complete_data_df(data.n, Estimand.MeanY)).fmi


def check_fmi_proxy(m: int = 2000) -> CheckResult:
    cfg = prepare_scenario(basic_scenario())
    rng = _rng(1)
    data = impose_missingness(generate_complete(cfg, rng), cfg, rng)
    analytic, _ = estimate_fmi_proxy(data, range(cfg.p))
    emp = empirical_fmi(data, m, _rng(2))
    diff = abs(analytic - emp)
    return CheckResult("fmi-proxy-vs-empirical", diff <= 0.05,
                       f"proxy {analytic:.4f} vs empirical {emp:.4f} (|diff| {diff:.4f} <= 0.05)")


def check_lasso_kkt(instances: int = 50) -> CheckResult:
    rng = _rng(3)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(30, 200))
        q = int(rng.integers(2, 25))
        X = rng.standard_normal((n, q)) * rng.uniform(0.2, 5.0, q) + rng.normal(0, 2, q)
        beta = rng.standard_normal(q) * (rng.random(q) < 0.5)
        y = X @ beta + rng.standard_normal(n)
        exempt = (0,) if rng.random() < 0.5 else ()
        path = lasso_path(X, y, exempt)
        worst = max(worst, kkt_residual(path, X, y))
    return CheckResult("lasso-kkt", worst < 1e-6, f"worst KKT residual {worst:.2e} over {instances} fits (< 1e-6)")


def check_soft_threshold() -> CheckResult:
    rng = _rng(4)
    worst = 0.0
    for _ in range(20):
        n, q = 200, int(rng.integers(1, 6))
        Q, _ = np.linalg.qr(rng.standard_normal((n, q)))
        Q -= Q.mean(axis=0)
        Q, _ = np.linalg.qr(Q)
        Xs = Q * math.sqrt(n)  # centred, orthogonal, unit 1/n variance
        y = Xs @ rng.normal(0, 0.5, q) + rng.standard_normal(n)
        y = (y - y.mean()) / y.std()
        corr = Xs.T @ y / n
        path = lasso_path(Xs, y, n_lambda=20)
        for lam, b in zip(path.lambdas, path.std_coefficients):
            expected = np.sign(corr) * np.maximum(np.abs(corr) - lam, 0.0)
            worst = max(worst, float(np.max(np.abs(b - expected))))
    return CheckResult("lasso-soft-threshold", worst < 1e-8, f"max deviation {worst:.2e} (< 1e-8)")


def check_pca() -> CheckResult:
    rng = _rng(5)
    data = rng.standard_normal((1000, 16))
    scores, frac = numstat.pca(data)
    cov = scores.T @ scores / (data.shape[0] - 1)
    off = float(np.max(np.abs(cov - np.diag(np.diag(cov)))))
    sum_err = abs(float(frac.sum()) - 1.0)
    monotone = bool(np.all(np.diff(frac) <= 0))
    ok = off < 1e-10 and sum_err < 1e-10 and monotone
    return CheckResult("pca", ok, f"max off-diagonal {off:.2e}, |sum-1| {sum_err:.2e}, nonincreasing={monotone}")


def check_bayes_draw(draws: int = 10_000) -> CheckResult:
    rng = _rng(6)
    n, q = 1000, 2
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    y = X @ [1.0, 0.5] + rng.standard_normal(n)
    fit = numstat.ols_fit(X, y)
    draw_rng = _rng(7)
    sig = np.empty(draws)
    coef = np.empty((draws, q))
    for i in range(draws):
        coef[i], sig[i] = numstat.bayes_lm_draw(fit, fit.gram_inverse, draw_rng)
    df = fit.residual_df
    expect_sigma = fit.residual_variance * df / (df - 2)
    rel_sigma = abs(sig.mean() / expect_sigma - 1)
    emp_cov = np.cov(coef, rowvar=False)
    target = sig.mean() * fit.gram_inverse
    rel_cov = np.linalg.norm(emp_cov - target) / np.linalg.norm(target)
    ok = rel_sigma < 0.01 and rel_cov < 0.05
    return CheckResult("bayes-draw-moments", ok,
                       f"sigma2 mean rel err {rel_sigma:.4f} (< 0.01), coef cov Frobenius rel err {rel_cov:.4f} (< 0.05)")


def _t_cdf_mp(t, df):
    t, df = mpmath.mpf(t), mpmath.mpf(df)
    x = df / (df + t * t)
    tail = mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, x, regularized=True) / 2
    return float(1 - tail if t > 0 else tail)


def check_distributions() -> CheckResult:
    mpmath.mp.dps = 30
    worst_q = 0.0
    for prob, df in [(0.975, 10), (0.9, 5), (0.975, 3.5), (0.995, 30), (0.6, 200), (0.025, 7)]:
        root = optimize.brentq(lambda t: _t_cdf_mp(t, df) - prob, -50, 50, xtol=1e-14, rtol=1e-15)
        worst_q = max(worst_q, abs(numstat.t_quantile(prob, df) - root))
    worst_c = 0.0
    for t, df in [(-3.0, 2), (0.5, 10), (1.96, 1e4), (2.5, 4.5), (-0.7, 60)]:
        worst_c = max(worst_c, abs(float(numstat.t_cdf(t, df)) - _t_cdf_mp(t, df)))
    z_err = max(abs(float(numstat.normal_cdf(z)) - float(mpmath.ncdf(z))) for z in (-4, -1.3, 0, 0.7, 3))
    ok = worst_q < 1e-9 and worst_c < 1e-10 and z_err < 1e-10
    return CheckResult("distribution-functions", ok,
                       f"quantile vs root-finding {worst_q:.1e} (< 1e-9), t cdf {worst_c:.1e}, normal cdf {z_err:.1e} (< 1e-10)")


ALL_CHECKS = (
    check_rubin_pooling,
    check_fmi_proxy,
    check_lasso_kkt,
    check_soft_threshold,
    check_pca,
    check_bayes_draw,
    check_distributions,
)


def run_all(echo=print) -> list[CheckResult]:
    results = []
    for check in ALL_CHECKS:
        res = check()
        results.append(res)
        if echo:
            echo(res.line())
    return results
