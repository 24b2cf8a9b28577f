"""Random streams, distribution functions and small linear-algebra helpers.

Everything here is deterministic given its inputs. Random draws always go
through an explicit :class:`numpy.random.Generator`, normally obtained from an
:class:`RngStream`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import special

from .errors import (
    ConfigurationError,
    DegenerateColumnError,
    InsufficientDataError,
    NotPSDError,
    SingularDesignError,
)

PSD_TOL = 1e-8
RANK_TOL = 1e-10
_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """Key for an independent, reproducible random stream.

    The generator is PCG64 seeded from ``SeedSequence(master_seed,
    spawn_key=(stream_id,))``, so distinct stream ids never share state and
    results do not depend on which worker evaluates which stream.
    """

    master_seed: int
    stream_id: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _MASK64:
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
        if not 0 <= int(self.stream_id) <= _MASK64:
            raise ConfigurationError("stream_id must be a 64-bit unsigned integer")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))


def hash64(*parts) -> int:
    """Stable 64-bit hash of the string forms of ``parts``."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


# ---------------------------------------------------------------------------
# distribution functions
# ---------------------------------------------------------------------------


def _check_df(df):
    if not (df > 0):
        raise ConfigurationError(f"degrees of freedom must be positive, got {df}")


def normal_cdf(z):
    return special.ndtr(z)


def normal_quantile(prob):
    if not 0.0 < prob < 1.0:
        raise ConfigurationError(f"probability must lie in (0, 1), got {prob}")
    return float(special.ndtri(prob))


def t_cdf(t, df):
    """Student-t distribution function; ``df=inf`` gives the normal cdf."""
    _check_df(df)
    if math.isinf(df):
        return special.ndtr(t)
    return special.stdtr(df, t)


def t_quantile(prob, df):
    _check_df(df)
    if not 0.0 < prob < 1.0:
        raise ConfigurationError(f"probability must lie in (0, 1), got {prob}")
    if math.isinf(df):
        return float(special.ndtri(prob))
    return float(special.stdtrit(df, prob))


def chisq_draw(df, rng: np.random.Generator) -> float:
    _check_df(df)
    return float(rng.chisquare(df))


def expit(x):
    return special.expit(x)


def logit(p):
    return special.logit(p)


# ---------------------------------------------------------------------------
# multivariate normal
# ---------------------------------------------------------------------------


def psd_factor(cov) -> np.ndarray:
    """Return ``F`` with ``F @ F.T == cov`` using the symmetric eigendecomposition.

    Eigenvalues in ``[-1e-8, 0)`` are clamped to zero.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise ConfigurationError(f"covariance must be square, got shape {cov.shape}")
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10 * scale):
        raise ConfigurationError("covariance matrix is not symmetric")
    evals, evecs = np.linalg.eigh(cov)
    if evals.size and evals.min() < -PSD_TOL:
        raise NotPSDError(f"covariance has eigenvalue {evals.min():.3e} < -{PSD_TOL:g}")
    evals = np.clip(evals, 0.0, None)
    return evecs * np.sqrt(evals)


def mvn_sample(mean, cov, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` rows from N(mean, cov).

    The covariance is factorised once per call by eigendecomposition, so
    nearly-PSD inputs (estimated correlation matrices) are accepted.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    factor = psd_factor(cov)
    if factor.shape[0] != mean.shape[0]:
        raise ConfigurationError("mean and covariance dimensions differ")
    z = rng.standard_normal((int(n), mean.shape[0]))
    return mean + z @ factor.T


# ---------------------------------------------------------------------------
# least squares
# ---------------------------------------------------------------------------


@dataclass
class OlsFit:
    """Ordinary least squares fit with classical (homoskedastic) inference."""

    coefficients: np.ndarray
    coef_covariance: np.ndarray
    residual_variance: float
    residual_df: int
    wald_p_values: np.ndarray
    gram_inverse: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.coef_covariance))


def ols_fit(design, response) -> OlsFit:
    """Fit ``response ~ design`` by least squares.

    The design should already contain an intercept column if one is wanted.
    Rank is checked with a column-pivoted QR: the design is declared singular
    when a pivot falls below ``1e-10`` times the largest pivot.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, q = X.shape
    if y.shape != (n,):
        raise ConfigurationError("response length does not match design rows")
    if n <= q:
        raise InsufficientDataError(f"need more rows than columns, got n={n}, q={q}")
    _, R, piv = sla.qr(X, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0:
        raise SingularDesignError(piv[0])
    bad = np.nonzero(diag < RANK_TOL * diag[0])[0]
    if bad.size:
        raise SingularDesignError(piv[bad[0]])

    r_inv = sla.solve_triangular(R, np.eye(q), check_finite=False)
    gram_inv_piv = r_inv @ r_inv.T
    order = np.argsort(piv)
    gram_inv = gram_inv_piv[np.ix_(order, order)]
    beta = gram_inv @ (X.T @ y)
    fitted = X @ beta
    resid = y - fitted
    df = n - q
    s2 = float(resid @ resid) / df
    cov = s2 * gram_inv
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, beta / np.where(se > 0, se, 1.0), np.where(beta == 0, 0.0, np.inf))
    pvals = 2.0 * special.stdtr(df, -np.abs(tstat))
    return OlsFit(beta, cov, s2, df, pvals, gram_inv, fitted)


def bayes_lm_draw(fit: OlsFit, design_gram_inverse, rng: np.random.Generator):
    """Draw (coefficients, residual variance) from the standard noninformative posterior.

    ``sigma2 = s2 * df / chi2(df)`` and ``beta ~ N(beta_hat, sigma2 * (X'X)^-1)``.
    """
    df = fit.residual_df
    if df < 1:
        raise InsufficientDataError("posterior draw needs at least one residual degree of freedom")
    g = chisq_draw(df, rng)
    sigma2 = fit.residual_variance * df / g
    V = np.asarray(design_gram_inverse, dtype=float)
    L = np.linalg.cholesky(0.5 * (V + V.T))
    z = rng.standard_normal(V.shape[0])
    coef = fit.coefficients + math.sqrt(sigma2) * (L @ z)
    return coef, sigma2


# ---------------------------------------------------------------------------
# correlation and principal components
# ---------------------------------------------------------------------------


def pearson_corr(x, y) -> float:
    """Pearson correlation over pairwise-complete entries (NaN marks missing).

    Returns ``nan`` when either complete-case vector is constant. A 0/1
    vector gives the point-biserial correlation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = ~(np.isnan(x) | np.isnan(y))
    if ok.sum() < 3:
        raise InsufficientDataError("need at least 3 complete pairs for a correlation")
    xc = x[ok] - x[ok].mean()
    yc = y[ok] - y[ok].mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        return math.nan
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pca(data, standardize: bool = True):
    """Principal components via the eigendecomposition of the correlation matrix.

    Returns
    -------
    scores : ndarray (n, p)
        Component scores, columns ordered by decreasing variance.
    explained : ndarray (p,)
        Fraction of total variance explained by each component.
    """
    Z = np.asarray(data, dtype=float)
    n, p = Z.shape
    if n <= p:
        raise InsufficientDataError(f"pca needs n > p, got n={n}, p={p}")
    Z = Z - Z.mean(axis=0)
    if standardize:
        sd = Z.std(axis=0, ddof=1)
        flat = np.nonzero(sd == 0)[0]
        if flat.size:
            raise DegenerateColumnError(flat[0])
        Z = Z / sd
    S = (Z.T @ Z) / (n - 1)
    evals, evecs = np.linalg.eigh(S)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    # fix sign so the largest loading of each component is positive
    signs = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(p)])
    evecs = evecs * np.where(signs == 0, 1.0, signs)
    explained = evals / evals.sum()
    return Z @ evecs, explained
