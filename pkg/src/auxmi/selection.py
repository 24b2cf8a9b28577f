"""Data-driven choice of auxiliary variables for the imputation model of Y.

Every strategy looks at one incomplete dataset, once, before any imputation,
and returns a :class:`SelectionResult`. Auxiliary indices are 0-based.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .datagen import StudyData
from .errors import ConfigurationError, InsufficientDataError, SingularDesignError
from .lasso import cv_lasso
from .numstat import ols_fit, pca, pearson_corr

log = logging.getLogger(__name__)


class StrategyKind(str, enum.Enum):
    QuickpredPt2 = "QuickpredPt2"
    QuickpredPt4 = "QuickpredPt4"
    PcAux = "PcAux"
    Forward = "Forward"
    ForwardSw = "ForwardSw"
    ForwardFMI = "ForwardFMI"
    Tests = "Tests"
    Lasso = "Lasso"
    Full = "Full"
    CCA = "CCA"

    @property
    def label(self) -> str:
        return LABELS[self]


LABELS = {
    StrategyKind.QuickpredPt2: "Quickpred-pt2",
    StrategyKind.QuickpredPt4: "Quickpred-pt4",
    StrategyKind.PcAux: "PcAux",
    StrategyKind.Forward: "Forward",
    StrategyKind.ForwardSw: "Forward-sw",
    StrategyKind.ForwardFMI: "Forward-FMI",
    StrategyKind.Tests: "Tests",
    StrategyKind.Lasso: "LASSO",
    StrategyKind.Full: "Full",
    StrategyKind.CCA: "CCA",
}


@dataclass(frozen=True)
class StrategySpec:
    kind: StrategyKind
    cutoff: float = 0.2
    variance_threshold: float = 0.40
    alpha: float = 0.05
    tau: float = 0.01
    cv_folds: int = 10
    forward_fit: str = "filled"

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.forward_fit not in FORWARD_FITS:
            raise ConfigurationError(f"forward_fit must be one of {FORWARD_FITS}")
        if not 0.0 < self.cutoff < 1.0:
            raise ConfigurationError("cutoff must lie in (0, 1)")
        if not 0.0 < self.variance_threshold <= 1.0:
            raise ConfigurationError("variance_threshold must lie in (0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if not self.tau > 0:
            raise ConfigurationError("tau must be positive")
        if int(self.cv_folds) < 2:
            raise ConfigurationError("cv_folds must be at least 2")

    @classmethod
    def default(cls, kind) -> "StrategySpec":
        kind = StrategyKind(kind)
        if kind is StrategyKind.QuickpredPt4:
            return cls(kind, cutoff=0.4)
        return cls(kind)

    @classmethod
    def from_dict(cls, d: dict) -> "StrategySpec":
        d = dict(d)
        if "kind" not in d:
            raise ConfigurationError("strategy entry needs a 'kind'")
        try:
            base = cls.default(d.pop("kind"))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        known = {"cutoff", "variance_threshold", "alpha", "tau", "cv_folds", "forward_fit"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown strategy fields: {sorted(unknown)}")
        fields = {k: getattr(base, k) for k in known}
        fields.update(d)
        return cls(base.kind, **fields)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "cutoff": self.cutoff,
            "variance_threshold": self.variance_threshold,
            "alpha": self.alpha,
            "tau": self.tau,
            "cv_folds": self.cv_folds,
            "forward_fit": self.forward_fit,
        }


ALL_KINDS = tuple(StrategyKind)
FORWARD_FITS = ("filled", "respondents")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    candidate: int
    criterion: float
    decision: str


@dataclass
class SelectionResult:
    selected_aux: tuple
    derived_predictors: np.ndarray | None = None
    trace: list = field(default_factory=list)

    def predictors(self, data: StudyData) -> np.ndarray:
        """Columns to add to X in the imputation model."""
        if self.derived_predictors is not None:
            return self.derived_predictors
        return data.aux[:, list(self.selected_aux)]


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------


def quickpred_select(data: StudyData, cutoff: float) -> SelectionResult:
    """Keep A_i when max(|corr(A_i, Y)|, |corr(A_i, M_Y)|) exceeds ``cutoff``.

    corr(A_i, Y) uses the available cases; undefined correlations count as 0.
    """
    selected, trace = [], []
    miss = data.miss_y.astype(float)
    for i in range(data.aux.shape[1]):
        score = 0.0
        for other in (data.y, miss):
            try:
                r = pearson_corr(data.aux[:, i], other)
            except InsufficientDataError:
                r = math.nan
            if not math.isnan(r):
                score = max(score, abs(r))
        keep = score > cutoff
        trace.append(TraceRecord(0, i, score, "select" if keep else "skip"))
        if keep:
            selected.append(i)
    return SelectionResult(tuple(selected), trace=trace)


def pcaux_select(data: StudyData, variance_threshold: float) -> SelectionResult:
    """Use the fewest leading principal components of the standardised
    auxiliaries whose cumulative explained fraction reaches the threshold."""
    scores, explained = pca(data.aux, standardize=True)
    cum = np.cumsum(explained)
    c = int(np.searchsorted(cum, variance_threshold - 1e-12)) + 1
    c = min(c, scores.shape[1])
    trace = [TraceRecord(k, k, float(cum[k]), "select" if k < c else "skip") for k in range(len(cum))]
    return SelectionResult((), derived_predictors=scores[:, :c].copy(), trace=trace)


def _fill_missing(data: StudyData, rng: np.random.Generator) -> np.ndarray:
    """Y with each missing entry replaced by a random observed value."""
    y = data.y.copy()
    miss = data.miss_y == 1
    if miss.any():
        y[miss] = rng.choice(y[~miss], size=int(miss.sum()), replace=True)
    return y


def forward_select(data: StudyData, alpha: float, allow_removal: bool = False,
                   fit_sample: str = "respondents", rng: np.random.Generator | None = None) -> SelectionResult:
    """Forward (optionally stepwise) selection by Wald tests.

    The base model is intercept + X. Each step refits the current model plus
    one candidate for every unselected auxiliary and adds the one with the
    smallest p-value if it is below ``alpha``. With ``allow_removal``, after
    each addition the selected auxiliary with the largest p-value in the
    joint model is dropped while that p-value exceeds ``alpha``.

    ``fit_sample="respondents"`` fits on rows with Y observed.
    ``fit_sample="filled"`` fits on all rows after filling each missing Y
    with a random draw from the observed values, which is how chained-
    equations software initialises Y before its first cycle (needs ``rng``).
    """
    if fit_sample == "respondents":
        rows = data.observed
        y = data.y[rows]
    elif fit_sample == "filled":
        if rng is None:
            raise ConfigurationError("filled-sample forward selection needs a random generator")
        rows = np.ones(data.n, dtype=bool)
        y = _fill_missing(data, rng)
    else:
        raise ConfigurationError(f"fit_sample must be one of {FORWARD_FITS}")
    base = np.column_stack([np.ones(int(rows.sum())), data.x[rows]])
    aux = data.aux[rows]

    def fit(columns):
        return ols_fit(np.column_stack([base, aux[:, columns]]), y)

    p = aux.shape[1]
    selected: list[int] = []
    trace: list[TraceRecord] = []
    seen = {()}
    step = 0
    while True:
        step += 1
        best_p, best_j = math.inf, -1
        for j in range(p):
            if j in selected:
                continue
            try:
                pval = float(fit(selected + [j]).wald_p_values[-1])
            except (SingularDesignError, InsufficientDataError):
                trace.append(TraceRecord(step, j, math.nan, "singular-skip"))
                continue
            if pval < best_p:
                best_p, best_j = pval, j
        if best_j < 0 or not best_p < alpha:
            trace.append(TraceRecord(step, best_j, best_p, "stop"))
            break
        selected.append(best_j)
        trace.append(TraceRecord(step, best_j, best_p, "add"))

        if allow_removal:
            while len(selected) > 1:
                pv = fit(selected).wald_p_values[2:]
                worst = int(np.argmax(pv))
                if not pv[worst] > alpha:
                    break
                trace.append(TraceRecord(step, selected[worst], float(pv[worst]), "remove"))
                del selected[worst]
        key = tuple(sorted(selected))
        if key in seen:
            # add/remove cycle; keep the current set
            trace.append(TraceRecord(step, -1, math.nan, "cycle-stop"))
            break
        seen.add(key)
    return SelectionResult(tuple(sorted(selected)), trace=trace)


def estimate_fmi_proxy(data: StudyData, subset) -> tuple[float, float]:
    """FMI for the mean of Y when a regression proxy of Y on ``subset`` is used.

    The proxy is the respondent OLS prediction of Y from the chosen
    auxiliaries, evaluated for everyone. With rho the respondent correlation
    of Y and the proxy, the large-sample variance of the regression estimator
    of the mean relative to the complete-data mean gives

        fmi = 1 - (1/n) / ((1 - rho^2)/n_R + rho^2/n).

    Returns ``(fmi, mu_hat)`` with ``mu_hat`` the regression estimator.
    """
    subset = list(subset)
    if not subset:
        raise ConfigurationError("subset must be nonempty")
    obs = data.observed
    n = data.n
    n_r = int(obs.sum())
    if n_r == n:
        return 0.0, float(np.mean(data.y))
    if n_r < len(subset) + 2:
        raise InsufficientDataError("too few respondents for the proxy regression")
    y_r = data.y[obs]
    design_r = np.column_stack([np.ones(n_r), data.aux[obs][:, subset]])
    fit = ols_fit(design_r, y_r)
    proxy = np.column_stack([np.ones(n), data.aux[:, subset]]) @ fit.coefficients
    proxy_r = proxy[obs]
    no_info = (data.n_miss / n, float(y_r.mean()))
    if np.ptp(proxy_r) == 0:
        return no_info
    rho = pearson_corr(y_r, proxy_r)
    if math.isnan(rho):
        return no_info
    pc = proxy_r - proxy_r.mean()
    slope = float(pc @ (y_r - y_r.mean())) / float(pc @ pc)
    mu_hat = float(y_r.mean() + slope * (proxy.mean() - proxy_r.mean()))
    return fmi_from_rho(rho, n, n_r), mu_hat


def fmi_from_rho(rho: float, n: int, n_r: int) -> float:
    r2 = rho * rho
    fmi = 1.0 - (1.0 / n) / ((1.0 - r2) / n_r + r2 / n)
    return min(1.0, max(0.0, fmi))


def forward_fmi_select(data: StudyData, tau: float) -> SelectionResult:
    """Greedy selection minimising the proxy-based FMI.

    Starts from the single auxiliary with the smallest FMI and keeps adding
    the one giving the smallest FMI until the reduction falls below
    ``tau * n_miss / n``.
    """
    p = data.aux.shape[1]
    if data.n_miss == 0:
        return SelectionResult((), trace=[TraceRecord(0, -1, 0.0, "no-missing")])
    threshold = tau * data.n_miss / data.n
    selected: list[int] = []
    trace: list[TraceRecord] = []
    current = math.nan
    step = 0
    while len(selected) < p:
        step += 1
        best_f, best_j = math.inf, -1
        for j in range(p):
            if j in selected:
                continue
            try:
                f, _ = estimate_fmi_proxy(data, selected + [j])
            except (SingularDesignError, InsufficientDataError):
                trace.append(TraceRecord(step, j, math.nan, "singular-skip"))
                continue
            if f < best_f:
                best_f, best_j = f, j
        if best_j < 0:
            break
        if selected and current - best_f < threshold:
            trace.append(TraceRecord(step, best_j, best_f, "stop"))
            break
        selected.append(best_j)
        trace.append(TraceRecord(step, best_j, best_f, "add"))
        current = best_f
    return SelectionResult(tuple(sorted(selected)), trace=trace)


def ttest_select(data: StudyData, alpha: float) -> SelectionResult:
    """Welch t-test of each auxiliary between respondents and non-respondents."""
    miss = data.miss_y == 1
    n1 = int(miss.sum())
    n0 = data.n - n1
    if n1 < 2 or n0 < 2:
        log.warning("t-test selection skipped: group sizes %d and %d", n0, n1)
        return SelectionResult((), trace=[TraceRecord(0, -1, math.nan, "group-too-small")])
    res = stats.ttest_ind(data.aux[~miss], data.aux[miss], axis=0, equal_var=False)
    pvals = np.nan_to_num(np.asarray(res.pvalue, dtype=float), nan=1.0)
    selected = tuple(int(j) for j in np.nonzero(pvals < alpha)[0])
    trace = [TraceRecord(0, j, float(pv), "select" if pv < alpha else "skip") for j, pv in enumerate(pvals)]
    return SelectionResult(selected, trace=trace)


def lasso_select(data: StudyData, cv_folds: int, rng: np.random.Generator) -> SelectionResult:
    """Auxiliaries with nonzero LASSO coefficient at the one-SE penalty.

    The model for Y contains X (unpenalised) and all auxiliaries, fitted on
    respondents only; coefficients are not reused.
    """
    obs = data.observed
    if int(obs.sum()) < cv_folds:
        raise InsufficientDataError("fewer respondents than cross-validation folds")
    design = np.column_stack([data.x[obs], data.aux[obs]])
    cv = cv_lasso(design, data.y[obs], penalty_exempt=(0,), folds=cv_folds, rng=rng)
    coef = cv.path.coefficients[cv.index_1se, 1:]
    selected = tuple(int(j) for j in np.nonzero(coef != 0)[0])
    trace = [TraceRecord(0, j, float(c), "select" if c != 0 else "skip") for j, c in enumerate(coef)]
    trace.append(TraceRecord(0, -1, cv.lambda_1se, "lambda_1se"))
    return SelectionResult(selected, trace=trace)


def select(data: StudyData, spec: StrategySpec, rng: np.random.Generator | None = None) -> SelectionResult:
    """Dispatch to the strategy named by ``spec.kind``."""
    kind = spec.kind
    p = data.aux.shape[1]
    if kind in (StrategyKind.QuickpredPt2, StrategyKind.QuickpredPt4):
        return quickpred_select(data, spec.cutoff)
    if kind is StrategyKind.PcAux:
        return pcaux_select(data, spec.variance_threshold)
    if kind in (StrategyKind.Forward, StrategyKind.ForwardSw):
        return forward_select(data, spec.alpha, allow_removal=kind is StrategyKind.ForwardSw,
                              fit_sample=spec.forward_fit, rng=rng)
    if kind is StrategyKind.ForwardFMI:
        return forward_fmi_select(data, spec.tau)
    if kind is StrategyKind.Tests:
        return ttest_select(data, spec.alpha)
    if kind is StrategyKind.Lasso:
        if rng is None:  # fold assignment
            raise ConfigurationError("LASSO selection needs a random generator for fold assignment")
        return lasso_select(data, spec.cv_folds, rng)
    if kind is StrategyKind.Full:
        return SelectionResult(tuple(range(p)))
    return SelectionResult(())
