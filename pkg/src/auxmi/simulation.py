"""Replicate loop, manifest handling and CSV reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .datagen import PRESETS, ScenarioConfig, generate_complete, impose_missingness, prepare_scenario
from .errors import ConfigurationError
from .impute import TRUE_VALUES, Estimand, ImputationModelSpec, StrategyRun, run_strategy
from .metrics import PerformanceSummary, RepResult, summarize_all
from .numstat import RngStream, hash64
from .selection import ALL_KINDS, StrategyKind, StrategySpec

log = logging.getLogger(__name__)

RESULTS_HEADER = ["scenario", "rep_id", "strategy", "estimand", "estimate", "model_se", "ci_low",
                  "ci_high", "df", "fmi", "converged", "n_selected", "miss_fraction"]
SUMMARY_HEADER = ["scenario", "strategy", "estimand", "true_value", "k_total", "k_used", "bias",
                  "bias_mcse", "emp_se", "emp_se_mcse", "mod_se", "mod_se_mcse", "coverage",
                  "coverage_mcse", "std_bias_pct", "rel_bias_pct", "rel_mod_se_err_pct",
                  "convergence_rate"]
SELECTION_HEADER = ["scenario", "strategy", "group", "n_in_group", "mean_selected", "pct_selected"]
PLOTDATA_HEADER = ["scenario", "strategy", "estimand", "measure", "value", "mc_ci_low", "mc_ci_high"]


@dataclass
class RunManifest:
    scenario: ScenarioConfig
    strategies: list
    output_dir: Path = Path("out")
    threads: int = 0
    verbose_traces: bool = False
    imputation: ImputationModelSpec = field(default_factory=ImputationModelSpec)

    def __post_init__(self):
        if not self.strategies:
            raise ConfigurationError("manifest needs at least one strategy")
        kinds = [s.kind for s in self.strategies]
        if len(set(kinds)) != len(kinds):
            raise ConfigurationError("each strategy kind may appear only once")
        if self.imputation.m != self.scenario.m:
            self.imputation = dataclasses.replace(self.imputation, m=self.scenario.m)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "strategies": [s.to_dict() for s in self.strategies],
            "imputation": {"method": self.imputation.method.value, "donors": self.imputation.donors,
                           "iterations": self.imputation.iterations},
            "output_dir": str(self.output_dir),
            "threads": self.threads,
            "verbose_traces": self.verbose_traces,
        }


def manifest_schema() -> dict:
    text = resources.files("auxmi").joinpath("manifest.schema.json").read_text()
    return json.loads(text)


def manifest_from_dict(doc: dict, base_dir: Path | None = None) -> RunManifest:
    try:
        jsonschema.validate(doc, manifest_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"manifest schema violation at {where}: {exc.message}") from exc
    scen = dict(doc["scenario"])
    preset = scen.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[preset]().to_dict()
        if "target_corr" in scen or "beta_a" in scen:
            base.pop("beta_a", None)
            base.pop("target_corr", None)
        base.update(scen)
        scen = base
    scenario = ScenarioConfig.from_dict(scen, base_dir)
    strategies = [StrategySpec.from_dict(s) for s in doc["strategies"]]
    imp = doc.get("imputation", {})
    imputation = ImputationModelSpec(method=imp.get("method", "norm"), donors=imp.get("donors", 5),
                                     m=scenario.m, iterations=imp.get("iterations", 1))
    out = Path(doc.get("output_dir", "out"))
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    return RunManifest(scenario, strategies, out, int(doc.get("threads", 0)),
                       bool(doc.get("verbose_traces", False)), imputation)


def load_manifest(path) -> RunManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read manifest {path}: {exc}") from exc
    return manifest_from_dict(doc, path.parent)


def preset_manifest(name: str, strategies=None, **scenario_overrides) -> RunManifest:
    scenario = PRESETS[name](**scenario_overrides)
    specs = [StrategySpec.default(k) for k in (strategies or ALL_KINDS)]
    return RunManifest(scenario, specs, Path("out") / name.lower())


# ---------------------------------------------------------------------------
# replicates
# ---------------------------------------------------------------------------


def stream(config: ScenarioConfig, strategy: str, rep_id: int, phase: str) -> np.random.Generator:
    """Generator for one (scenario, strategy, replicate, phase) cell."""
    return RngStream(config.master_seed, hash64(config.name, strategy, rep_id, phase)).generator()


@dataclass
class ReplicateOutput:
    rep_id: int
    miss_fraction: float
    runs: list
    traces: list | None = None


def run_replicate(config: ScenarioConfig, strategies, model: ImputationModelSpec, rep_id: int,
                  keep_traces: bool = False) -> ReplicateOutput:
    """Generate one dataset and run every strategy on it (paired design)."""
    data = generate_complete(config, stream(config, "-", rep_id, "gen"))
    data = impose_missingness(data, config, stream(config, "-", rep_id, "miss"))
    runs = []
    for spec in strategies:
        kind = spec.kind.value
        run = run_strategy(data, spec, model, stream(config, kind, rep_id, "impute"),
                           select_rng=stream(config, kind, rep_id, "select"))
        if run.error:
            log.debug("rep %d %s failed: %s", rep_id, kind, run.error)
        runs.append(run)
    traces = None
    if keep_traces:
        traces = [(run.strategy.kind.label, rec) for run in runs if run.selection
                  for rec in run.selection.trace]
    # drop bulky per-row arrays before results cross process boundaries
    for run in runs:
        if run.selection is not None:
            run.selection.derived_predictors = None
            if not keep_traces:
                run.selection.trace = []
    return ReplicateOutput(rep_id, float(data.miss_y.mean()), runs, traces)


_WORKER = {}


def _init_worker(config, strategies, model, keep_traces):
    _WORKER.update(config=config, strategies=strategies, model=model, keep_traces=keep_traces)


def _worker_rep(rep_id):
    w = _WORKER
    return run_replicate(w["config"], w["strategies"], w["model"], rep_id, w["keep_traces"])


def run_replicates(config: ScenarioConfig, strategies, model: ImputationModelSpec,
                   threads: int = 1, keep_traces: bool = False, progress=None) -> list:
    """Run ``config.k_reps`` replicates; output is ordered by ``rep_id``."""
    rep_ids = range(1, config.k_reps + 1)
    workers = (os.cpu_count() or 1) if threads == 0 else threads
    outputs = []
    if workers <= 1:
        for rep in rep_ids:
            outputs.append(run_replicate(config, strategies, model, rep, keep_traces))
            if progress:
                progress(rep)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(config, strategies, model, keep_traces)) as pool:
            for out in pool.map(_worker_rep, rep_ids, chunksize=max(1, config.k_reps // (8 * workers))):
                outputs.append(out)
                if progress:
                    progress(out.rep_id)
    outputs.sort(key=lambda o: o.rep_id)
    return outputs


def rep_results(outputs) -> list[RepResult]:
    rows = []
    for out in outputs:
        for run in out.runs:
            for pooled in (run.mean_y, run.beta_x):
                rows.append(RepResult(out.rep_id, run.strategy.kind.label, pooled.estimand.value,
                                      pooled.q_bar, math.sqrt(pooled.t_var) if pooled.converged else math.nan,
                                      pooled.ci_low, pooled.ci_high, pooled.converged))
    return rows


def selection_table(outputs, config: ScenarioConfig) -> list[dict]:
    """Average count and percentage selected per auxiliary group and strategy."""
    groups = config.aux_groups()
    order = sorted(set(groups), key=lambda g: (float(g.split(",")[0][1:]), g.endswith("no")))
    sizes = {g: groups.count(g) for g in order}
    counts = defaultdict(lambda: defaultdict(float))
    n_reps = defaultdict(int)
    labels = []
    for out in outputs:
        for run in out.runs:
            kind = run.strategy.kind
            if kind in (StrategyKind.CCA, StrategyKind.PcAux) or run.selection is None:
                continue
            label = kind.label
            if label not in labels:
                labels.append(label)
            n_reps[label] += 1
            for j in run.selection.selected_aux:
                counts[label][groups[j]] += 1
    rows = []
    for label in labels:
        k = n_reps[label]
        total = 0.0
        for g in order:
            mean = counts[label][g] / k
            total += mean
            rows.append(dict(strategy=label, group=g, n_in_group=sizes[g], mean_selected=mean,
                             pct_selected=100.0 * mean / sizes[g]))
        rows.append(dict(strategy=label, group="Total", n_in_group=config.p, mean_selected=total,
                         pct_selected=100.0 * total / config.p))
    return rows


def plot_rows(summaries: list[PerformanceSummary]) -> list[dict]:
    """Bias and empirical SE with 95% Monte Carlo intervals (long format)."""
    rows = []
    for s in summaries:
        for measure, value, mcse in (("bias", s.bias, s.bias_mcse), ("emp_se", s.emp_se, s.emp_se_mcse)):
            rows.append(dict(strategy=s.strategy, estimand=s.estimand, measure=measure, value=value,
                             mc_ci_low=value - 1.96 * mcse, mc_ci_high=value + 1.96 * mcse))
    return rows


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(h)) for h in header])


@dataclass
class ScenarioReport:
    config: ScenarioConfig
    outputs: list
    results: list
    summaries: list
    selection: list

    def summary(self, strategy: str, estimand: str) -> PerformanceSummary:
        for s in self.summaries:
            if s.strategy == strategy and s.estimand == estimand:
                return s
        raise KeyError((strategy, estimand))

    def selection_total(self, strategy: str) -> float:
        for row in self.selection:
            if row["strategy"] == strategy and row["group"] == "Total":
                return row["mean_selected"]
        raise KeyError(strategy)

    @property
    def miss_fraction(self) -> float:
        return float(np.mean([o.miss_fraction for o in self.outputs]))


def simulate(manifest: RunManifest, progress=None) -> ScenarioReport:
    config = prepare_scenario(manifest.scenario)
    outputs = run_replicates(config, manifest.strategies, manifest.imputation, manifest.threads,
                             manifest.verbose_traces, progress)
    results = rep_results(outputs)
    true_values = {e.value: v for e, v in TRUE_VALUES.items()}
    summaries = summarize_all(results, true_values)
    return ScenarioReport(config, outputs, results, summaries, selection_table(outputs, config))


def write_reports(report: ScenarioReport, output_dir: Path, verbose_traces: bool = False) -> None:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    name = report.config.name
    extra = {}
    for out in report.outputs:
        for run in out.runs:
            n_sel = ""
            if run.selection is not None:
                n_sel = len(run.selection.selected_aux)
            extra[(out.rep_id, run.strategy.kind.label)] = (n_sel, out.miss_fraction, run)
    res_rows = []
    for r in report.results:
        n_sel, miss, run = extra[(r.rep_id, r.strategy)]
        pooled = run.mean_y if r.estimand == Estimand.MeanY.value else run.beta_x
        res_rows.append(dict(scenario=name, rep_id=r.rep_id, strategy=r.strategy, estimand=r.estimand,
                             estimate=r.estimate, model_se=r.model_se, ci_low=r.ci_low, ci_high=r.ci_high,
                             df=pooled.df, fmi=pooled.fmi, converged=r.converged, n_selected=n_sel,
                             miss_fraction=miss))
    _write_csv(output_dir / "results.csv", RESULTS_HEADER, res_rows)
    _write_csv(output_dir / "summary.csv", SUMMARY_HEADER,
               [dict(scenario=name, **s.as_dict()) for s in report.summaries])
    _write_csv(output_dir / "selection.csv", SELECTION_HEADER,
               [dict(scenario=name, **row) for row in report.selection])
    _write_csv(output_dir / "plotdata.csv", PLOTDATA_HEADER,
               [dict(scenario=name, **row) for row in plot_rows(report.summaries)])
    if verbose_traces:
        trace_dir = output_dir / "traces"
        trace_dir.mkdir(exist_ok=True)
        for out in report.outputs:
            rows = [dict(strategy=label, step=rec.step, candidate=rec.candidate,
                         criterion=rec.criterion, decision=rec.decision)
                    for label, rec in (out.traces or [])]
            _write_csv(trace_dir / f"rep_{out.rep_id:05d}.csv",
                       ["strategy", "step", "candidate", "criterion", "decision"], rows)


def run_scenario(manifest: RunManifest, progress=None) -> ScenarioReport:
    """Simulate every replicate and write the four CSV reports."""
    report = simulate(manifest, progress)
    write_reports(report, manifest.output_dir, manifest.verbose_traces)
    return report
