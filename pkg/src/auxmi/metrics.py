"""Simulation performance measures with Monte Carlo standard errors."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class RepResult:
    rep_id: int
    strategy: str
    estimand: str
    estimate: float
    model_se: float
    ci_low: float
    ci_high: float
    converged: bool


@dataclass
class PerformanceSummary:
    strategy: str
    estimand: str
    true_value: float
    k_total: int
    k_used: int
    bias: float = math.nan
    bias_mcse: float = math.nan
    emp_se: float = math.nan
    emp_se_mcse: float = math.nan
    mod_se: float = math.nan
    mod_se_mcse: float = math.nan
    coverage: float = math.nan
    coverage_mcse: float = math.nan
    std_bias_pct: float = math.nan
    rel_bias_pct: float | None = None
    rel_mod_se_err_pct: float = math.nan
    convergence_rate: float = math.nan

    def as_dict(self) -> dict:
        return asdict(self)


def summarize(results, true_value: float) -> PerformanceSummary:
    """Performance of one (strategy, estimand) group.

    Replicates that failed only count towards ``convergence_rate``.
    Estimates are summed in ``rep_id`` order so the output does not depend
    on the order of ``results``.
    """
    results = sorted(results, key=lambda r: r.rep_id)
    if not results:
        raise ValueError("no results to summarize")
    strategy, estimand = results[0].strategy, results[0].estimand
    if any(r.strategy != strategy or r.estimand != estimand for r in results):
        raise ValueError("results mix strategies or estimands")
    ok = [r for r in results if r.converged]
    k_total, k = len(results), len(ok)
    out = PerformanceSummary(strategy, estimand, float(true_value), k_total, k,
                             convergence_rate=k / k_total)
    if k < 2:
        return out

    est = np.array([r.estimate for r in ok])
    se = np.array([r.model_se for r in ok])
    lo = np.array([r.ci_low for r in ok])
    hi = np.array([r.ci_high for r in ok])

    mean = float(est.mean())
    var = float(est.var(ddof=1))
    out.bias = mean - true_value
    out.bias_mcse = math.sqrt(var / k)
    out.emp_se = math.sqrt(var)
    out.emp_se_mcse = out.emp_se / math.sqrt(2 * (k - 1))

    se2 = se * se
    out.mod_se = math.sqrt(float(se2.mean()))
    out.mod_se_mcse = (math.sqrt(float(se2.var(ddof=1)) / (4 * k * out.mod_se**2))
                       if out.mod_se > 0 else 0.0)

    cover = float(np.mean((lo <= true_value) & (true_value <= hi)))
    out.coverage = cover
    out.coverage_mcse = math.sqrt(cover * (1 - cover) / k)

    if out.emp_se > 0:
        out.std_bias_pct = 100.0 * out.bias / out.emp_se
        out.rel_mod_se_err_pct = 100.0 * (out.mod_se / out.emp_se - 1.0)
    if true_value != 0:
        out.rel_bias_pct = 100.0 * out.bias / true_value
    return out


def summarize_all(results, true_values: dict) -> list[PerformanceSummary]:
    """Summaries for every (strategy, estimand) pair, in first-seen order."""
    groups = defaultdict(list)
    for r in results:
        groups[(r.strategy, r.estimand)].append(r)
    return [summarize(rs, true_values[est]) for (_, est), rs in groups.items()]
