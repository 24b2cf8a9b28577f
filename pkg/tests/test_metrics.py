import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auxmi.metrics import RepResult, summarize, summarize_all


def reps(estimates, ses, truth_half_width=None, converged=None, strategy="S", estimand="MeanY"):
    out = []
    for i, (e, s) in enumerate(zip(estimates, ses)):
        hw = 1.96 * s if truth_half_width is None else truth_half_width
        ok = True if converged is None else converged[i]
        out.append(RepResult(i, strategy, estimand, e, s, e - hw, e + hw, ok))
    return out


def test_all_at_truth():
    s = summarize(reps([1.0] * 4, [1.0] * 4), 1.0)
    assert s.bias == 0 and s.emp_se == 0 and s.coverage == 1
    assert math.isnan(s.std_bias_pct)
    assert s.coverage_mcse == 0.0


def test_hand_example():
    s = summarize(reps([0.0, 2.0], [1.0, 1.0], truth_half_width=1.5), 1.0)
    assert s.bias == 0
    assert s.emp_se == pytest.approx(math.sqrt(2))
    assert s.mod_se == 1.0
    assert s.coverage == 1.0
    assert s.rel_mod_se_err_pct == pytest.approx(-29.29, abs=0.01)
    assert s.rel_bias_pct == 0.0


def test_coverage_mcse_design_target():
    k = 2000
    covered = np.arange(k) < 1900
    results = [RepResult(i, "S", "BetaX", 0.3, 0.1, 0.0 if c else 0.5, 1.0, True) for i, c in enumerate(covered)]
    s = summarize(results, 0.3)
    assert s.coverage == 0.95
    assert s.coverage_mcse == pytest.approx(0.0049, abs=5e-5)


def test_formulas_against_direct_computation():
    rng = np.random.default_rng(1)
    est = rng.normal(0.1, 0.2, 50)
    se = rng.uniform(0.15, 0.25, 50)
    s = summarize(reps(est, se), 0.0)
    k = 50
    assert s.bias == pytest.approx(est.mean())
    assert s.bias_mcse == pytest.approx(est.std(ddof=1) / math.sqrt(k))
    assert s.emp_se_mcse == pytest.approx(est.std(ddof=1) / math.sqrt(2 * (k - 1)))
    assert s.mod_se == pytest.approx(math.sqrt(np.mean(se**2)))
    assert s.mod_se_mcse == pytest.approx(math.sqrt(np.var(se**2, ddof=1) / (4 * k * np.mean(se**2))))
    cover = np.mean(np.abs(est) <= 1.96 * se)
    assert s.coverage == pytest.approx(cover)
    assert s.rel_bias_pct is None


def test_non_converged_excluded():
    s = summarize(reps([0.0, 1.0, 100.0], [1.0, 1.0, 1.0], converged=[True, True, False]), 0.5)
    assert s.k_used == 2 and s.k_total == 3
    assert s.convergence_rate == pytest.approx(2 / 3)
    assert s.bias == 0.0


def test_too_few_converged():
    s = summarize(reps([0.0, 1.0], [1.0, 1.0], converged=[True, False]), 0.0)
    assert s.convergence_rate == 0.5
    assert math.isnan(s.bias) and math.isnan(s.coverage)


def test_mixed_groups_rejected():
    results = reps([0.0], [1.0]) + reps([1.0], [1.0], strategy="T")
    with pytest.raises(ValueError):
        summarize(results, 0.0)


def test_summarize_all_groups():
    results = reps([0.0, 1.0], [1.0, 1.0]) + reps([0.3, 0.2], [0.1, 0.1], estimand="BetaX")
    out = summarize_all(results, {"MeanY": 0.0, "BetaX": 0.3})
    assert [(s.strategy, s.estimand) for s in out] == [("S", "MeanY"), ("S", "BetaX")]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 40))
def test_order_invariance(seed, k):
    rng = np.random.default_rng(seed)
    results = reps(rng.standard_normal(k), rng.uniform(0.5, 1.5, k))
    shuffled = [results[i] for i in rng.permutation(k)]
    assert summarize(results, 0.1).as_dict() == summarize(shuffled, 0.1).as_dict()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(0.1, 10))
def test_affine_equivariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    est = rng.standard_normal(20)
    se = rng.uniform(0.5, 1.5, 20)
    truth = 0.2
    base = summarize(reps(est, se), truth)
    moved = summarize(reps(est + shift, se), truth + shift)
    for f in ("bias", "emp_se", "mod_se", "coverage", "std_bias_pct", "rel_mod_se_err_pct"):
        assert getattr(moved, f) == pytest.approx(getattr(base, f), abs=1e-9)
    scaled = summarize(reps(est * scale, se * scale), truth * scale)
    for f in ("bias", "emp_se", "mod_se"):
        assert getattr(scaled, f) == pytest.approx(getattr(base, f) * scale, rel=1e-9, abs=1e-12)
    for f in ("std_bias_pct", "coverage", "rel_mod_se_err_pct"):
        assert getattr(scaled, f) == pytest.approx(getattr(base, f), rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=30))
def test_mcse_nonnegative(values):
    s = summarize(reps(values, [1.0] * len(values)), 0.0)
    for f in ("bias_mcse", "emp_se_mcse", "mod_se_mcse", "coverage_mcse"):
        assert getattr(s, f) >= 0
    if s.coverage in (0.0, 1.0):
        assert s.coverage_mcse == 0.0
