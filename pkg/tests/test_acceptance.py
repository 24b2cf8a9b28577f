"""Acceptance criteria at desk scale (Basic K=500, Extreme K=300, m=20).

Each test prints one PASS/FAIL line in the terminal summary, then asserts.
"""

import time

import pytest

from auxmi.oracle import run_all
from auxmi.selection import ALL_KINDS, StrategyKind
from auxmi.simulation import preset_manifest, run_scenario

from conftest import record

LABEL = {k: k.label for k in ALL_KINDS}
MI_KINDS = [k for k in ALL_KINDS if k is not StrategyKind.CCA]


def _reports(basic_report, extreme_report):
    return (("Basic", basic_report), ("Extreme", extreme_report))


def _finish(criterion, failures, passed_detail):
    ok = not failures
    record(criterion, ok, passed_detail if ok else "; ".join(failures))
    assert ok, failures


def test_c01_full_mean_unbiased(basic_report, extreme_report):
    fails, parts = [], []
    for name, rep in _reports(basic_report, extreme_report):
        s = rep.summary("Full", "MeanY")
        parts.append(f"{name} bias {s.bias:+.4f} (3 MCSE {3 * s.bias_mcse:.4f})")
        if not abs(s.bias) <= 3 * s.bias_mcse:
            fails.append(parts[-1])
    _finish(1, fails, "; ".join(parts))


def test_c02_cca_bias_largest_and_negative(basic_report, extreme_report):
    fails, parts = [], []
    for name, rep in _reports(basic_report, extreme_report):
        cca = rep.summary("CCA", "MeanY").bias
        others = {LABEL[k]: rep.summary(LABEL[k], "MeanY").bias for k in MI_KINDS}
        worst = max(others, key=lambda k: abs(others[k]))
        parts.append(f"{name} CCA {cca:+.4f}, next {worst} {others[worst]:+.4f}")
        if not (cca < 0 and abs(cca) > abs(others[worst])):
            fails.append(parts[-1])
    _finish(2, fails, "; ".join(parts))


def test_c03_selection_bias_below_third_of_cca(basic_report, extreme_report):
    kinds = ["Quickpred-pt2", "Forward-FMI", "Tests", "LASSO"]
    fails, parts = [], []
    for name, rep in _reports(basic_report, extreme_report):
        third = abs(rep.summary("CCA", "MeanY").bias) / 3
        worst = max(abs(rep.summary(k, "MeanY").bias) for k in kinds)
        parts.append(f"{name} max |bias| {worst:.4f} < {third:.4f}")
        for k in kinds:
            b = rep.summary(k, "MeanY").bias
            if not abs(b) < third:
                fails.append(f"{name} {k} |bias| {abs(b):.4f} >= {third:.4f}")
    _finish(3, fails, "; ".join(parts))


def test_c04_standardised_bias(basic_report, extreme_report):
    fails, parts = [], []
    for name, rep in _reports(basic_report, extreme_report):
        for k in ("Full", "LASSO"):
            sb = rep.summary(k, "MeanY").std_bias_pct
            parts.append(f"{name} {k} {sb:+.1f}%")
            if not abs(sb) < 30:
                fails.append(parts[-1])
    _finish(4, fails, ", ".join(parts))


def test_c05_mean_coverage(basic_report, extreme_report):
    fails, parts = [], []
    for name, rep in _reports(basic_report, extreme_report):
        for k in ("Full", "LASSO"):
            c = rep.summary(k, "MeanY").coverage
            parts.append(f"{name} {k} {c:.3f}")
            if not 0.91 <= c <= 0.98:
                fails.append(parts[-1])
    _finish(5, fails, ", ".join(parts))


def test_c06_beta_x_bias_and_coverage(basic_report, extreme_report):
    fails = []
    for k in ALL_KINDS:
        s = extreme_report.summary(LABEL[k], "BetaX")
        if not abs(s.bias) <= 0.04 * 0.3:
            fails.append(f"Extreme {LABEL[k]} |bias| {abs(s.bias):.4f} > 0.012")
        s = basic_report.summary(LABEL[k], "BetaX")
        if not abs(s.bias) <= 3 * s.bias_mcse:
            fails.append(f"Basic {LABEL[k]} bias {s.bias:+.4f} beyond 3 MCSE {3 * s.bias_mcse:.4f}")
    covs = []
    for name, rep in _reports(basic_report, extreme_report):
        for k in ALL_KINDS:
            c = rep.summary(LABEL[k], "BetaX").coverage
            covs.append(c)
            if not 0.925 <= c <= 0.975:
                fails.append(f"{name} {LABEL[k]} coverage {c:.3f} outside [0.925, 0.975]")
    _finish(6, fails, f"coverage range [{min(covs):.3f}, {max(covs):.3f}], biases within limits")


def test_c07_beta_x_empirical_se(basic_report, extreme_report):
    fails = []
    cca = basic_report.summary("CCA", "BetaX").emp_se
    worst = max(basic_report.summary(LABEL[k], "BetaX").emp_se for k in MI_KINDS)
    for k in MI_KINDS:
        e = basic_report.summary(LABEL[k], "BetaX").emp_se
        if not e <= cca:
            fails.append(f"Basic {LABEL[k]} emp SE {e:.5f} > CCA {cca:.5f}")
    gain = extreme_report.summary("CCA", "BetaX").emp_se - extreme_report.summary("Full", "BetaX").emp_se
    if not gain >= 0.010:
        fails.append(f"Extreme Full gain {gain:.4f} < 0.010")
    _finish(7, fails, f"Basic max MI emp SE {worst:.5f} <= CCA {cca:.5f}; Extreme Full gain {gain:.4f}")


def test_c08_forward_model_se_underestimation(extreme_report):
    fails, parts = [], []
    for k in ("Forward", "Forward-sw"):
        r = extreme_report.summary(k, "MeanY").rel_mod_se_err_pct
        parts.append(f"{k} {r:+.1f}%")
        if not r < -8:
            fails.append(f"{k} rel model SE error {r:+.1f}% not below -8%")
    _finish(8, fails, ", ".join(parts))


def test_c09_table1_selection_counts(basic_report):
    paper = {"Quickpred-pt2": 5.9, "Quickpred-pt4": 2.0, "Forward": 12.1,
             "Forward-FMI": 10.6, "Tests": 5.2, "LASSO": 12.5}
    fails, parts = [], []
    for k, target in paper.items():
        got = basic_report.selection_total(k)
        parts.append(f"{k} {got:.2f}/{target}")
        if not abs(got - target) <= 0.15 * target:
            fails.append(f"{k} {got:.2f} not within 15% of {target}")
    _finish(9, fails, ", ".join(parts))


def test_c10_missingness_calibration(basic_report, extreme_report):
    fails, parts = [], []
    for (name, rep), target in zip(_reports(basic_report, extreme_report), (0.20, 0.50)):
        f = rep.miss_fraction
        parts.append(f"{name} {f:.4f}")
        if not abs(f - target) <= 0.01:
            fails.append(f"{name} {f:.4f} not within 0.01 of {target}")
    _finish(10, fails, ", ".join(parts))


def test_c11_oracle_suite():
    start = time.time()
    results = run_all(echo=None)
    elapsed = time.time() - start
    fails = [r.line() for r in results if not r.passed]
    if elapsed >= 120:
        fails.append(f"oracle suite took {elapsed:.0f}s")
    _finish(11, fails, f"{len(results)}/{len(results)} checks in {elapsed:.1f}s")


@pytest.mark.parametrize("preset", ["Basic"])
def test_c12_determinism_across_threads(tmp_path, preset):
    outputs = []
    for threads in (1, 2, 1):
        man = preset_manifest(preset, k_reps=6, m=5)
        man.threads = threads
        man.output_dir = tmp_path / f"t{threads}_{len(outputs)}"
        run_scenario(man)
        outputs.append({p.name: p.read_bytes() for p in sorted(man.output_dir.glob("*.csv"))})
    fails = []
    if len(outputs[0]) != 4:
        fails.append(f"expected 4 CSVs, got {sorted(outputs[0])}")
    for other in outputs[1:]:
        for name, data in outputs[0].items():
            if other.get(name) != data:
                fails.append(f"{name} differs between runs")
    _finish(12, fails, "byte-identical CSVs for threads=1, 2 and a repeat run")
