"""Scenario configuration, complete-data generation and missingness.

Complete data follow

    (X, A) ~ N(0, 1 (+) Sigma_A),   Y = beta_x X + beta_a' A + eps,

with ``Var(eps)`` chosen so that ``Var(Y) = 1``; then ``beta_x`` is
``corr(Y, X)`` and ``Sigma_A beta_a`` is the vector ``corr(Y, A)``.
Values of ``Y`` are deleted with probability ``expit(gamma0 + gamma_a' A)``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CalibrationError, ConfigurationError, InfeasibleCorrelationsError
from .numstat import RngStream, expit, hash64, logit, mvn_sample, psd_factor

LOG_OR_BASIC = math.log(1.2)
LOG_OR_EXTREME = math.log(2.0)
CORR_BINS = (0.0, 0.1, 0.2, 0.4)


@dataclass
class ScenarioConfig:
    """Generative, missingness and replication settings for one scenario.

    ``sigma_a=None`` means the identity. Exactly one of ``beta_a`` and
    ``target_corr`` is given; :func:`derive_generative_params` fills the other
    together with ``sigma_eps`` (a variance).
    """

    name: str
    n: int
    p: int
    gamma_a: np.ndarray
    target_miss: float
    beta_x: float = 0.3
    beta_a: np.ndarray | None = None
    sigma_a: np.ndarray | None = None
    sigma_eps: float | None = None
    target_corr: np.ndarray | None = None
    gamma0: float | None = None
    m: int = 20
    k_reps: int = 500
    master_seed: int = 20240601
    calibration_n: int = 1_000_000

    def __post_init__(self):
        self.n = int(self.n)
        self.p = int(self.p)
        self.gamma_a = _vector(self.gamma_a, self.p, "gamma_a")
        if self.beta_a is not None:
            self.beta_a = _vector(self.beta_a, self.p, "beta_a")
        if self.target_corr is not None:
            self.target_corr = _vector(self.target_corr, self.p, "target_corr")
        if self.sigma_a is not None:
            sa = np.asarray(self.sigma_a, dtype=float)
            if sa.shape != (self.p, self.p):
                raise ConfigurationError(f"sigma_a must be {self.p}x{self.p}, got {sa.shape}")
            if not np.allclose(np.diag(sa), 1.0, atol=1e-10):
                raise ConfigurationError("sigma_a must have unit diagonal")
            psd_factor(sa)
            self.sigma_a = sa
        if self.n < 3 or self.p < 1:
            raise ConfigurationError("scenario needs n >= 3 and p >= 1")
        if not 0.0 < self.target_miss < 1.0:
            raise ConfigurationError("target_miss must lie in (0, 1)")
        if self.m < 2 or self.k_reps < 1:
            raise ConfigurationError("need m >= 2 and k_reps >= 1")

    @property
    def cov_a(self) -> np.ndarray:
        return np.eye(self.p) if self.sigma_a is None else self.sigma_a

    @property
    def corr_ya(self) -> np.ndarray:
        """Population correlations between Y and each auxiliary."""
        if self.target_corr is not None:
            return self.target_corr
        if self.beta_a is None:
            raise ConfigurationError("scenario has neither beta_a nor target_corr")
        return self.cov_a @ self.beta_a

    def aux_groups(self) -> list[str]:
        """Label each auxiliary by |corr(Y, A)| interval and missingness association."""
        labels = []
        for r, g in zip(np.abs(self.corr_ya), self.gamma_a):
            k = int(np.searchsorted(CORR_BINS, r + 1e-12, side="right")) - 1
            upper = "1]" if k == len(CORR_BINS) - 1 else f"{CORR_BINS[k + 1]:g})"
            labels.append(f"[{CORR_BINS[k]:g},{upper};{'yes' if g != 0 else 'no'}")
        return labels

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = v.tolist()
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ScenarioConfig":
        d = dict(d)
        csv_path = d.pop("sigma_a_csv", None)
        if csv_path is not None:
            path = Path(csv_path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            d["sigma_a"] = load_corr_csv(path)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown scenario fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


def _vector(v, p, name):
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (p,):
        raise ConfigurationError(f"{name} must have length {p}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite")
    return arr


def load_corr_csv(path) -> np.ndarray:
    """Read a header-free, row-major CSV correlation matrix."""
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    mat = np.array(rows, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigurationError(f"{path}: correlation matrix must be square")
    return mat


@dataclass
class StudyData:
    """One simulated dataset. Missing ``y`` entries are NaN."""

    x: np.ndarray
    y: np.ndarray
    aux: np.ndarray
    miss_y: np.ndarray
    y_true: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def observed(self) -> np.ndarray:
        return self.miss_y == 0

    @property
    def n_miss(self) -> int:
        return int(self.miss_y.sum())


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def derive_generative_params(config: ScenarioConfig) -> ScenarioConfig:
    """Fill ``beta_a`` (from ``target_corr``) and ``sigma_eps``.

    Returns a new config; the input is not modified.
    """
    cov = config.cov_a
    if config.target_corr is not None:
        if config.beta_a is not None:
            raise ConfigurationError("give exactly one of beta_a and target_corr")
        beta_a = np.linalg.solve(cov, config.target_corr)
    elif config.beta_a is not None:
        beta_a = config.beta_a
    else:
        raise ConfigurationError("give exactly one of beta_a and target_corr")
    sigma_eps = config.sigma_eps
    if sigma_eps is None:
        sigma_eps = 1.0 - config.beta_x**2 - float(beta_a @ cov @ beta_a)
        if sigma_eps <= 0:
            raise InfeasibleCorrelationsError(
                f"requested correlations leave residual variance {sigma_eps:.4g} <= 0"
            )
    elif sigma_eps < 0:
        raise ConfigurationError("sigma_eps must be nonnegative")
    return dataclasses.replace(config, beta_a=beta_a, target_corr=None, sigma_eps=float(sigma_eps))


def generate_complete(config: ScenarioConfig, rng: np.random.Generator) -> StudyData:
    if config.beta_a is None or config.sigma_eps is None:
        raise ConfigurationError("call derive_generative_params first")
    p = config.p
    cov = np.zeros((p + 1, p + 1))
    cov[0, 0] = 1.0
    cov[1:, 1:] = config.cov_a
    xa = mvn_sample(np.zeros(p + 1), cov, config.n, rng)
    x = xa[:, 0].copy()
    aux = xa[:, 1:].copy()
    eps = rng.standard_normal(config.n) * math.sqrt(config.sigma_eps)
    y = config.beta_x * x + aux @ config.beta_a + eps
    return StudyData(x=x, y=y, aux=aux, miss_y=np.zeros(config.n, dtype=np.int8), y_true=y.copy())


def calibrate_gamma0(config: ScenarioConfig, calibration_n: int | None = None,
                     calibration_seed: int | None = None, tol: float = 5e-4) -> float:
    """Find the intercept giving ``E[expit(gamma0 + gamma_a' A)] = target_miss``.

    The expectation is a Monte Carlo average over fresh draws of ``A``; the
    intercept is found by bisection on this (monotone) average.
    """
    n_cal = int(calibration_n or config.calibration_n)
    if calibration_seed is None:
        calibration_seed = hash64(config.name, "calibrate")
    rng = RngStream(config.master_seed, calibration_seed).generator()
    gamma = config.gamma_a
    target = config.target_miss
    if not np.any(gamma):
        return float(logit(target))

    factor = psd_factor(config.cov_a)
    eta = np.empty(n_cal)
    chunk = 100_000
    for start in range(0, n_cal, chunk):
        stop = min(start + chunk, n_cal)
        z = rng.standard_normal((stop - start, config.p))
        eta[start:stop] = (z @ factor.T) @ gamma

    def excess(g0):
        return float(expit(g0 + eta).mean()) - target

    lo, hi = -50.0, 50.0
    if excess(lo) > 0 or excess(hi) < 0:
        raise CalibrationError("cannot bracket gamma0 within [-50, 50]")
    # bisect to far below the tolerance; the MC average is then matched
    # to target within ~1e-9
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    g0 = 0.5 * (lo + hi)
    if abs(excess(g0)) > tol:
        raise CalibrationError("bisection did not reach the requested tolerance")
    return g0


def impose_missingness(data: StudyData, config: ScenarioConfig, rng: np.random.Generator) -> StudyData:
    if config.gamma0 is None:
        raise ConfigurationError("gamma0 is not calibrated")
    prob = missingness_probability(data.aux, config)
    miss = (rng.random(data.n) < prob).astype(np.int8)
    y = data.y_true.copy()
    y[miss == 1] = np.nan
    return StudyData(x=data.x, y=y, aux=data.aux, miss_y=miss, y_true=data.y_true)


def missingness_probability(aux, config: ScenarioConfig) -> np.ndarray:
    return expit(config.gamma0 + np.asarray(aux) @ config.gamma_a)


def prepare_scenario(config: ScenarioConfig) -> ScenarioConfig:
    """Derive generative parameters and calibrate ``gamma0`` if not set."""
    cfg = derive_generative_params(config)
    if cfg.gamma0 is None:
        cfg = dataclasses.replace(cfg, gamma0=calibrate_gamma0(cfg))
    return cfg


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def basic_scenario(**overrides) -> ScenarioConfig:
    """n=1000, p=16, independent auxiliaries, 20% missing, OR 1.2 per SD."""
    beta_a = np.repeat([0.0, 0.1, 0.2, 0.4], 4)
    # first member of each pair within every beta level
    gamma = np.zeros(16)
    gamma[0::2] = LOG_OR_BASIC
    kw = dict(name="Basic", n=1000, p=16, beta_a=beta_a, gamma_a=gamma, target_miss=0.20, k_reps=500)
    kw.update(overrides)
    return ScenarioConfig(**kw)


def extreme_scenario(**overrides) -> ScenarioConfig:
    """n=250, p=50 (34 extra junk auxiliaries), 50% missing, OR 2 per SD."""
    beta_a = np.concatenate([np.zeros(38), np.repeat([0.1, 0.2, 0.4], 4)])
    gamma = np.zeros(50)
    gamma[[0, 2, 38, 40, 42, 44, 46, 48]] = LOG_OR_EXTREME
    kw = dict(name="Extreme", n=250, p=50, beta_a=beta_a, gamma_a=gamma, target_miss=0.50, k_reps=300)
    kw.update(overrides)
    return ScenarioConfig(**kw)


def block_exchangeable_corr(block_sizes, within: float, between: float) -> np.ndarray:
    """Correlation matrix with constant correlation inside and between blocks."""
    sizes = [int(s) for s in block_sizes]
    p = sum(sizes)
    mat = np.full((p, p), float(between))
    start = 0
    for s in sizes:
        mat[start:start + s, start:start + s] = within
        start += s
    np.fill_diagonal(mat, 1.0)
    psd_factor(mat)
    return mat


# group counts by |corr(Y, A)| interval and missingness association
REALISTIC_GROUPS = (
    # (corr, n_yes, n_no)
    (0.05, 3, 0),
    (0.15, 11, 23),
    (0.25, 13, 28),
    (0.45, 3, 0),
)


def realistic_shaped_scenario(within: float = 0.5, between: float = 0.15, block_size: int = 9,
                              **overrides) -> ScenarioConfig:
    """A synthetic stand-in shaped like the cohort-study scenario.

    n=4983, p=81, 17.4% missing. The correlation matrix is block
    exchangeable; auxiliaries with equal target correlation share blocks.
    Missingness coefficients alternate between log(1.2) and log(0.8).
    This does not reproduce the cohort's actual correlation structure.
    """
    corr, gamma, sizes = [], [], []
    sign = 1
    for r, n_yes, n_no in REALISTIC_GROUPS:
        count = n_yes + n_no
        n_blocks = max(1, round(count / block_size))
        base, extra = divmod(count, n_blocks)
        sizes.extend(base + (1 if b < extra else 0) for b in range(n_blocks))
        corr.extend([r] * count)
        for j in range(count):
            if j < n_yes:
                gamma.append(math.log(1.2) if sign > 0 else math.log(0.8))
                sign = -sign
            else:
                gamma.append(0.0)
    p = len(corr)
    sigma = block_exchangeable_corr(sizes, within, between)
    kw = dict(name="Realistic-shaped", n=4983, p=p, sigma_a=sigma, target_corr=np.array(corr),
              gamma_a=np.array(gamma), target_miss=0.174, k_reps=200)
    kw.update(overrides)
    return ScenarioConfig(**kw)


PRESETS = {
    "Basic": basic_scenario,
    "Extreme": extreme_scenario,
    "Realistic-shaped": realistic_shaped_scenario,
}


def scenario_to_json(config: ScenarioConfig) -> str:
    return json.dumps(config.to_dict(), indent=2)
