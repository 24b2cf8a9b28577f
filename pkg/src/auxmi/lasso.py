"""L1-penalised least squares by cyclic coordinate descent.

Columns are centred and scaled to unit (1/n) variance before fitting; the
objective on that scale is

    ||y_c - X_s b||^2 / (2n) + lam * sum_{j penalised} |b_j|,

and coefficients are mapped back to the original scale on return. Columns
in ``penalty_exempt`` are never shrunk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError, ConvergenceError, InsufficientDataError

TOL = 1e-7
MAX_SWEEPS = 100_000


@numba.njit(cache=True)
def _cd_solve(gram, xty, beta, penalized, lam, tol, max_sweeps):
    """Covariance-update coordinate descent, warm started from ``beta``.

    ``gram`` is X'X/n and ``xty`` is X'y/n on the standardised scale.
    Returns the number of sweeps used, or -1 on non-convergence. ``beta`` is
    updated in place.
    """
    q = beta.shape[0]
    # absorbs rounding so that lambda_max itself gives exact zeros
    cut = lam * (1.0 + 1e-12)
    grad = xty - gram @ beta
    for sweep in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(q):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            z = grad[j] + gjj * beta[j]
            if penalized[j]:
                if z > cut:
                    new = (z - lam) / gjj
                elif z < -cut:
                    new = (z + lam) / gjj
                else:
                    new = 0.0
            else:
                new = z / gjj
            delta = new - beta[j]
            if delta != 0.0:
                for k in range(q):
                    grad[k] -= gram[k, j] * delta
                beta[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            return sweep
    return -1


def coordinate_descent(gram, xty, lam, penalized, beta0=None, tol=TOL, max_sweeps=MAX_SWEEPS):
    """Run coordinate descent at a single penalty; returns ``(beta, sweeps)``.

    ``sweeps`` is -1 when ``max_sweeps`` was hit first.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    xty = np.ascontiguousarray(xty, dtype=np.float64)
    beta = np.zeros(xty.shape[0]) if beta0 is None else np.array(beta0, dtype=np.float64)
    pen = np.ascontiguousarray(penalized, dtype=np.bool_)
    sweeps = _cd_solve(gram, xty, beta, pen, float(lam), float(tol), int(max_sweeps))
    return beta, sweeps


@dataclass
class LassoPath:
    """Solutions along a decreasing penalty grid.

    ``coefficients`` and ``intercepts`` are on the original scale;
    ``std_coefficients`` on the standardised scale the penalty applies to.
    """

    lambdas: np.ndarray
    coefficients: np.ndarray
    intercepts: np.ndarray
    standardization: np.ndarray
    penalty_exempt: tuple
    std_coefficients: np.ndarray = field(repr=False)
    sweeps: np.ndarray = field(repr=False)

    def predict(self, design) -> np.ndarray:
        """Predictions for every grid point, shape (n, L)."""
        return np.asarray(design, dtype=float) @ self.coefficients.T + self.intercepts


def _standardize(X):
    mean = X.mean(axis=0)
    Xc = X - mean
    scale = np.sqrt((Xc * Xc).mean(axis=0))
    safe = np.where(scale > 0, scale, 1.0)
    return Xc / safe, mean, scale


def _exempt_mask(q, penalty_exempt):
    exempt = np.zeros(q, dtype=bool)
    for j in penalty_exempt:
        if not 0 <= j < q:
            raise ConfigurationError(f"penalty-exempt index {j} out of range")
        exempt[j] = True
    return exempt


def lambda_max(design, response, penalty_exempt=()) -> float:
    """Smallest penalty at which every penalised coefficient is zero."""
    X = np.asarray(design, dtype=float)
    Xs, _, scale = _standardize(X)
    yc = np.asarray(response, dtype=float) - np.mean(response)
    exempt = _exempt_mask(X.shape[1], penalty_exempt) & (scale > 0)
    r = yc
    if exempt.any():
        Xe = Xs[:, exempt]
        r = yc - Xe @ np.linalg.lstsq(Xe, yc, rcond=None)[0]
    grad = np.abs(Xs.T @ r) / X.shape[0]
    pen = ~exempt & (scale > 0)
    return float(grad[pen].max()) if pen.any() else 0.0


def lasso_path(design, response, penalty_exempt=(), n_lambda: int = 100,
               lambda_min_ratio: float = 1e-3, lambdas=None, tol: float = TOL,
               max_sweeps: int = MAX_SWEEPS) -> LassoPath:
    """Fit the LASSO along a log-spaced penalty grid with warm starts.

    Parameters
    ----------
    design : array (n, q)
        Predictors, without an intercept column.
    response : array (n,)
    penalty_exempt : iterable of int
        Columns fitted without penalty.
    n_lambda, lambda_min_ratio : grid from ``lambda_max`` down to
        ``lambda_max * lambda_min_ratio``; ignored when ``lambdas`` is given.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ConfigurationError("design must be (n, q) and response (n,)")
    n, q = X.shape
    if n < 2:
        raise InsufficientDataError("lasso needs at least 2 rows")
    if np.ptp(y) == 0:
        raise InsufficientDataError("response is constant")
    exempt_idx = tuple(sorted(int(j) for j in penalty_exempt))
    exempt = _exempt_mask(q, exempt_idx)
    Xs, mean, scale = _standardize(X)
    ybar = y.mean()
    yc = y - ybar
    gram = (Xs.T @ Xs) / n
    xty = (Xs.T @ yc) / n
    penalized = ~exempt

    if lambdas is None:
        lmax = lambda_max(X, y, exempt_idx)
        if lmax <= 0:
            lmax = 1e-12
        lambdas = lmax * np.logspace(0.0, np.log10(lambda_min_ratio), int(n_lambda))
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) > 0) or np.any(lambdas < 0):
        raise ConfigurationError("lambdas must be nonnegative and decreasing")

    L = lambdas.shape[0]
    std_coef = np.zeros((L, q))
    sweeps = np.zeros(L, dtype=np.int64)
    beta = np.zeros(q)
    usable = exempt & (scale > 0)
    if usable.any():
        beta[usable] = np.linalg.lstsq(Xs[:, usable], yc, rcond=None)[0]
    for i, lam in enumerate(lambdas):
        beta, used = coordinate_descent(gram, xty, lam, penalized, beta, tol, max_sweeps)
        if used < 0:
            raise ConvergenceError(f"coordinate descent did not converge at lambda index {i}", i)
        sweeps[i] = used
        std_coef[i] = beta

    safe = np.where(scale > 0, scale, 1.0)
    coef = np.where(scale > 0, std_coef / safe, 0.0)
    intercepts = ybar - coef @ mean
    return LassoPath(
        lambdas=lambdas,
        coefficients=coef,
        intercepts=intercepts,
        standardization=np.column_stack([mean, scale]),
        penalty_exempt=exempt_idx,
        std_coefficients=std_coef,
        sweeps=sweeps,
    )


def kkt_residual(path: LassoPath, design, response) -> float:
    """Largest violation of the optimality conditions over the whole path.

    Evaluated on the standardised scale: penalised zero coefficients need
    ``|x_j' r| / n <= lam``; nonzero ones need ``x_j' r / n = lam * sign(b_j)``;
    exempt ones need a zero gradient.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    n = X.shape[0]
    Xs, _, scale = _standardize(X)
    yc = y - y.mean()
    exempt = _exempt_mask(X.shape[1], path.penalty_exempt)
    worst = 0.0
    for lam, b in zip(path.lambdas, path.std_coefficients):
        grad = Xs.T @ (yc - Xs @ b) / n
        for j in range(X.shape[1]):
            if scale[j] == 0:
                continue
            if exempt[j]:
                v = abs(grad[j])
            elif b[j] == 0:
                v = max(0.0, abs(grad[j]) - lam)
            else:
                v = abs(grad[j] - lam * np.sign(b[j]))
            worst = max(worst, v)
    return worst


def objective(design, response, std_beta, lam, penalty_exempt=()) -> float:
    """Penalised objective on the standardised scale."""
    X = np.asarray(design, dtype=float)
    Xs, _, _ = _standardize(X)
    yc = np.asarray(response, dtype=float) - np.mean(response)
    r = yc - Xs @ std_beta
    pen = ~_exempt_mask(X.shape[1], penalty_exempt)
    return float(r @ r) / (2 * X.shape[0]) + lam * float(np.abs(std_beta[pen]).sum())


@dataclass
class CvResult:
    lambda_min: float
    lambda_1se: float
    cv_mean: np.ndarray
    cv_se: np.ndarray
    lambdas: np.ndarray = field(repr=False)
    path: LassoPath = field(repr=False)
    folds: np.ndarray = field(repr=False)

    @property
    def index_1se(self) -> int:
        return int(np.nonzero(self.lambdas == self.lambda_1se)[0][0])

    @property
    def index_min(self) -> int:
        return int(np.nonzero(self.lambdas == self.lambda_min)[0][0])


def assign_folds(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Random fold labels with sizes differing by at most one."""
    labels = np.arange(n) % folds
    return labels[rng.permutation(n)]


def cv_lasso(design, response, penalty_exempt=(), folds: int = 10,
             rng: np.random.Generator | None = None, n_lambda: int = 100,
             lambda_min_ratio: float = 1e-3) -> CvResult:
    """K-fold cross-validated LASSO with the one-standard-error rule.

    The penalty grid comes from the full-data fit and is shared by all folds.
    Fold errors are held-out mean squared errors; ``cv_se`` is the standard
    deviation of the fold errors divided by ``sqrt(folds)``.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    n = X.shape[0]
    if folds < 2 or n < folds:
        raise ConfigurationError(f"need n >= folds >= 2, got n={n}, folds={folds}")
    if n // folds < 2:
        raise ConfigurationError("every fold needs at least 2 rows")
    if rng is None:
        raise ConfigurationError("cv_lasso needs an explicit random generator")
    full = lasso_path(X, y, penalty_exempt, n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio)
    lambdas = full.lambdas
    labels = assign_folds(n, folds, rng)
    errors = np.empty((folds, lambdas.shape[0]))
    for k in range(folds):
        test = labels == k
        fit = lasso_path(X[~test], y[~test], penalty_exempt, lambdas=lambdas)
        resid = y[test][:, None] - fit.predict(X[test])
        errors[k] = (resid**2).mean(axis=0)
    cv_mean = errors.mean(axis=0)
    cv_se = errors.std(axis=0, ddof=1) / np.sqrt(folds)
    i_min = int(np.argmin(cv_mean))
    bound = cv_mean[i_min] + cv_se[i_min]
    i_1se = int(np.nonzero(cv_mean <= bound)[0][0])
    return CvResult(
        lambda_min=float(lambdas[i_min]),
        lambda_1se=float(lambdas[i_1se]),
        cv_mean=cv_mean,
        cv_se=cv_se,
        lambdas=lambdas,
        path=full,
        folds=labels,
    )
