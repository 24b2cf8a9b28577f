"""Multiple imputation of Y, analysis of each completed dataset, Rubin's rules.

The simulation setting has a single incomplete variable (Y) and fully
observed predictors, where one pass of chained equations is already
converged. :func:`mice` implements the general cycle for several incomplete
columns.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .datagen import StudyData
from .errors import (
    AuxmiError,
    ConfigurationError,
    ImputationError,
    InsufficientDataError,
    SingularDesignError,
)
from .numstat import bayes_lm_draw, normal_quantile, ols_fit, t_quantile
from .selection import SelectionResult, StrategyKind, StrategySpec, select


class Method(str, enum.Enum):
    NormDraw = "norm"
    PMM = "pmm"


class Estimand(str, enum.Enum):
    MeanY = "MeanY"
    BetaX = "BetaX"


TRUE_VALUES = {Estimand.MeanY: 0.0, Estimand.BetaX: 0.3}


@dataclass(frozen=True)
class ImputationModelSpec:
    method: Method = Method.NormDraw
    donors: int = 5
    m: int = 20
    iterations: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.m < 2:
            raise ConfigurationError("m must be at least 2")
        if self.donors < 1:
            raise ConfigurationError("donors must be at least 1")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be at least 1")


@dataclass
class PooledEstimate:
    estimand: Estimand
    q_bar: float
    w: float
    b: float
    t_var: float
    df: float
    ci_low: float
    ci_high: float
    fmi: float
    m_used: int
    converged: bool = True

    @property
    def se(self) -> float:
        return math.sqrt(self.t_var)

    @classmethod
    def failed(cls, estimand: Estimand) -> "PooledEstimate":
        nan = math.nan
        return cls(estimand, nan, nan, nan, nan, nan, nan, nan, nan, 0, converged=False)


# ---------------------------------------------------------------------------
# imputation
# ---------------------------------------------------------------------------


def _fit_imputation_model(y, predictors):
    obs = ~np.isnan(y)
    Z = np.column_stack([np.ones(y.shape[0]), predictors])
    n_obs = int(obs.sum())
    if n_obs < Z.shape[1] + 2:
        raise InsufficientDataError(
            f"{n_obs} respondents for an imputation model with {Z.shape[1]} coefficients"
        )
    try:
        fit = ols_fit(Z[obs], y[obs])
    except SingularDesignError as exc:
        raise ImputationError(f"singular imputation model (column {exc.column})") from exc
    return fit, Z, obs


def draw_imputations(y, predictors, m: int, rng: np.random.Generator,
                     method: Method = Method.NormDraw, donors: int = 5) -> np.ndarray:
    """Return an (n, m) array of completed copies of ``y``.

    The regression of Y on (1, predictors) is fitted once on the respondents
    and reused; each copy gets its own posterior parameter draw.
    """
    y = np.asarray(y, dtype=float)
    predictors = np.asarray(predictors, dtype=float).reshape(y.shape[0], -1)
    method = Method(method)
    miss = np.isnan(y)
    out = np.repeat(y[:, None], m, axis=1)
    if not miss.any():
        return out
    fit, Z, obs = _fit_imputation_model(y, predictors)
    if method is Method.PMM and int(obs.sum()) < donors:
        raise InsufficientDataError("fewer respondents than PMM donors")
    Zm = Z[miss]
    y_obs = y[obs]
    # type-1 matching: observed rows use the point estimate
    yhat_obs = fit.fitted
    for k in range(m):
        coef, sigma2 = bayes_lm_draw(fit, fit.gram_inverse, rng)
        if method is Method.NormDraw:
            out[miss, k] = Zm @ coef + rng.standard_normal(Zm.shape[0]) * math.sqrt(sigma2)
        else:
            out[miss, k] = _pmm_match(Zm @ coef, yhat_obs, y_obs, donors, rng)
    return out


def _pmm_match(yhat_mis, yhat_obs, y_obs, donors, rng):
    dist = np.abs(yhat_mis[:, None] - yhat_obs[None, :])
    # stable sort keeps the lower row index first among ties
    pool = np.argsort(dist, axis=1, kind="stable")[:, :donors]
    pick = rng.integers(0, donors, size=yhat_mis.shape[0])
    return y_obs[pool[np.arange(pool.shape[0]), pick]]


def impute_norm(y, predictors, rng: np.random.Generator) -> np.ndarray:
    """One proper Bayesian linear-regression imputation of ``y``."""
    return draw_imputations(y, predictors, 1, rng, Method.NormDraw)[:, 0]


def impute_pmm(y, predictors, donors: int, rng: np.random.Generator) -> np.ndarray:
    """One predictive-mean-matching imputation of ``y``."""
    return draw_imputations(y, predictors, 1, rng, Method.PMM, donors)[:, 0]


def mice(data, m: int, rng: np.random.Generator, iterations: int = 10,
         method: Method = Method.NormDraw, donors: int = 5, predictor_matrix=None) -> list:
    """Chained-equations imputation of every incomplete column of ``data``.

    Parameters
    ----------
    data : array (n, v)
        NaN marks missing entries.
    predictor_matrix : bool array (v, v), optional
        Row j flags the columns used to impute column j; defaults to all others.

    Returns
    -------
    list of m completed (n, v) arrays.
    """
    data = np.asarray(data, dtype=float)
    n, v = data.shape
    miss = np.isnan(data)
    if predictor_matrix is None:
        predictor_matrix = ~np.eye(v, dtype=bool)
    predictor_matrix = np.asarray(predictor_matrix, dtype=bool)
    targets = [j for j in range(v) if miss[:, j].any()]
    completed = []
    for _ in range(m):
        cur = data.copy()
        for j in targets:
            obs_vals = data[~miss[:, j], j]
            if obs_vals.size == 0:
                raise InsufficientDataError(f"column {j} has no observed values")
            cur[miss[:, j], j] = rng.choice(obs_vals, size=int(miss[:, j].sum()))
        for _ in range(iterations):
            for j in targets:
                yj = data[:, j].copy()
                preds = cur[:, predictor_matrix[j]]
                cur[:, j] = draw_imputations(yj, preds, 1, rng, method, donors)[:, 0]
        completed.append(cur)
    return completed


# ---------------------------------------------------------------------------
# analysis and pooling
# ---------------------------------------------------------------------------


def analyze(y, x, estimand: Estimand):
    """Point estimate and model SE from one complete dataset.

    ``y`` may be (n,) or (n, m); the latter returns arrays of length m.
    """
    estimand = Estimand(estimand)
    Y = np.asarray(y, dtype=float)
    single = Y.ndim == 1
    if single:
        Y = Y[:, None]
    n = Y.shape[0]
    if estimand is Estimand.MeanY:
        est = Y.mean(axis=0)
        se = Y.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        x = np.asarray(x, dtype=float)
        xc = x - x.mean()
        sxx = float(xc @ xc)
        est = (xc @ Y) / sxx
        intercept = Y.mean(axis=0) - est * x.mean()
        resid = Y - intercept - np.outer(x, est)
        s2 = (resid * resid).sum(axis=0) / (n - 2)
        se = np.sqrt(s2 / sxx)
    if single:
        return float(est[0]), float(se[0])
    return est, se


def complete_data_df(n: int, estimand: Estimand) -> int:
    return n - (1 if Estimand(estimand) is Estimand.MeanY else 2)


def pool_rubin(estimates, variances, n_complete_df: float, estimand: Estimand = Estimand.MeanY) -> PooledEstimate:
    """Combine m completed-data analyses with Rubin's rules.

    Degrees of freedom use the Barnard-Rubin small-sample adjustment;
    with zero between-imputation variance the normal quantile is used.
    """
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(variances, dtype=float)
    m = q.shape[0]
    if m < 2 or u.shape != q.shape:
        raise ConfigurationError("pooling needs m >= 2 matching estimates and variances")
    if np.any(u < 0):
        raise ConfigurationError("variances must be nonnegative")
    q_bar = float(q.mean())
    w = float(u.mean())
    b = float(q.var(ddof=1))
    inflation = (1.0 + 1.0 / m) * b
    t_var = w + inflation
    fmi = inflation / t_var if t_var > 0 else 0.0
    if b == 0.0:
        df = math.inf
    else:
        nu_com = float(n_complete_df)
        try:
            nu_old = (m - 1) * (1.0 + w / inflation) ** 2
        except OverflowError:  # negligible b
            nu_old = math.inf
        nu_obs = (nu_com + 1.0) / (nu_com + 3.0) * nu_com * (1.0 - fmi)
        if nu_obs <= 0:
            df = nu_old
        elif math.isinf(nu_old):
            df = nu_obs
        else:
            df = nu_old * nu_obs / (nu_old + nu_obs)
    crit = normal_quantile(0.975) if math.isinf(df) else t_quantile(0.975, df)
    half = crit * math.sqrt(t_var)
    return PooledEstimate(Estimand(estimand), q_bar, w, b, t_var, df, q_bar - half, q_bar + half, fmi, m)


def cca_analyze(data: StudyData, estimand: Estimand) -> PooledEstimate:
    """Complete-case analysis wrapped as a single-'imputation' estimate."""
    estimand = Estimand(estimand)
    obs = data.observed
    n_r = int(obs.sum())
    if n_r < 3:
        raise InsufficientDataError("fewer than 3 respondents")
    est, se = analyze(data.y[obs], data.x[obs], estimand)
    df = complete_data_df(n_r, estimand)
    half = t_quantile(0.975, df) * se
    return PooledEstimate(estimand, est, se * se, 0.0, se * se, float(df), est - half, est + half, 0.0, 1)


# ---------------------------------------------------------------------------
# one strategy on one dataset
# ---------------------------------------------------------------------------


@dataclass
class StrategyRun:
    strategy: StrategySpec
    mean_y: PooledEstimate
    beta_x: PooledEstimate
    selection: SelectionResult | None
    error: str | None = None

    @property
    def converged(self) -> bool:
        return self.mean_y.converged and self.beta_x.converged


def run_strategy(data: StudyData, strategy: StrategySpec, model: ImputationModelSpec,
                 rng: np.random.Generator, select_rng: np.random.Generator | None = None) -> StrategyRun:
    """Select auxiliaries once, impute m times, analyse and pool both estimands.

    ``rng`` drives the imputations; ``select_rng`` (defaults to ``rng``)
    drives any randomness in selection. Failures give ``converged=False``.
    """
    select_rng = rng if select_rng is None else select_rng
    if strategy.kind is StrategyKind.CCA:
        try:
            return StrategyRun(strategy, cca_analyze(data, Estimand.MeanY),
                               cca_analyze(data, Estimand.BetaX), None)
        except AuxmiError as exc:
            return _failed(strategy, None, exc)
    selection = None
    try:
        selection = select(data, strategy, select_rng)
        Z = np.column_stack([data.x, selection.predictors(data)])
        Y = draw_imputations(data.y, Z, model.m, rng, model.method, model.donors)
        out = []
        for estimand in (Estimand.MeanY, Estimand.BetaX):
            est, se = analyze(Y, data.x, estimand)
            out.append(pool_rubin(est, se**2, complete_data_df(data.n, estimand), estimand))
        return StrategyRun(strategy, out[0], out[1], selection)
    except (AuxmiError, np.linalg.LinAlgError) as exc:
        return _failed(strategy, selection, exc)


def _failed(strategy, selection, exc):
    return StrategyRun(strategy, PooledEstimate.failed(Estimand.MeanY),
                       PooledEstimate.failed(Estimand.BetaX), selection, error=str(exc))
