"""Linear nuisance learners: least squares, ridge, lasso and logistic
regression, each solved from scratch on top of dense linear algebra."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .base import Learner


def _solve_penalized(X: np.ndarray, y: np.ndarray, lam: float):
    """Minimize ||y - b0 - X beta||^2 + lam * ||beta||^2 (intercept free).

    Normal equations on centered data with a Cholesky solve; falls back
    to a least-squares solve on rank-deficient designs.
    """
    mu = X.mean(axis=0)
    ybar = y.mean()
    Xc = X - mu
    yc = y - ybar
    gram = Xc.T @ Xc
    if lam > 0.0:
        gram = gram + lam * np.eye(X.shape[1])
    rhs = Xc.T @ yc
    try:
        chol = np.linalg.cholesky(gram)
        beta = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    except np.linalg.LinAlgError:
        beta = np.linalg.lstsq(Xc, yc, rcond=None)[0]
    intercept = ybar - mu @ beta
    return beta, intercept


class OlsRegressor(Learner):
    """Ordinary least squares with an intercept."""

    kind = "regressor"
    param_names = ()

    def _fit(self, X, y):
        self.coef_, self.intercept_ = _solve_penalized(X, y, 0.0)

    def _predict(self, X):
        return X @ self.coef_ + self.intercept_


class RidgeRegressor(Learner):
    """Ridge regression; the intercept is never penalized."""

    kind = "regressor"
    param_names = ("lambda_",)

    def __init__(self, lambda_=1.0):
        super().__init__()
        if lambda_ < 0:
            raise ValidationError(f"ridge penalty must be >= 0, got {lambda_}")
        self.lambda_ = float(lambda_)

    def _fit(self, X, y):
        self.coef_, self.intercept_ = _solve_penalized(X, y, self.lambda_)

    def _predict(self, X):
        return X @ self.coef_ + self.intercept_


class LassoRegressor(Learner):
    """L1-penalized least squares via cyclic coordinate descent.

    Features are standardized internally (coefficients are reported on
    the original scale) and the intercept is never penalized.  The
    objective is (1/2n)||y - b0 - X beta||^2 + lambda * ||beta_std||_1
    with the penalty applied to the standardized coefficients.
    Convergence: max absolute coefficient change <= tol per sweep.
    """

    kind = "regressor"
    param_names = ("lambda_", "tol", "max_iter")

    def __init__(self, lambda_=0.1, tol=1e-7, max_iter=1000):
        super().__init__()
        if lambda_ < 0:
            raise ValidationError(f"lasso penalty must be >= 0, got {lambda_}")
        if tol <= 0:
            raise ValidationError(f"tolerance must be > 0, got {tol}")
        self.lambda_ = float(lambda_)
        self.tol = float(tol)
        self.max_iter = int(max_iter)

    def _fit(self, X, y):
        n, p = X.shape
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        active_cols = sd > 0.0
        scale = np.where(active_cols, sd, 1.0)
        Xs = (X - mu) / scale
        ybar = y.mean()
        yc = y - ybar

        col_sq = (Xs * Xs).mean(axis=0)
        beta = np.zeros(p)
        resid = yc.copy()
        lam = self.lambda_
        self.converged_ = False
        for _ in range(self.max_iter):
            max_delta = 0.0
            for j in range(p):
                if not active_cols[j]:
                    continue
                old = beta[j]
                if old != 0.0:
                    resid += Xs[:, j] * old
                rho = (Xs[:, j] @ resid) / n
                new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
                if new != 0.0:
                    resid -= Xs[:, j] * new
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
            if max_delta <= self.tol:
                self.converged_ = True
                break

        self.coef_ = beta / scale
        self.coef_[~active_cols] = 0.0
        self.intercept_ = ybar - mu @ self.coef_
        self.coef_std_ = beta

    def _predict(self, X):
        return X @ self.coef_ + self.intercept_


def lasso_lambda_max(X, y) -> float:
    """Smallest penalty at which the lasso solution is exactly zero,
    computed on the internally standardized design."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = X.shape[0]
    sd = X.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    Xs = (X - X.mean(axis=0)) / scale
    yc = y - y.mean()
    # per-column dots match the coordinate-descent updates bit for bit,
    # so the all-zero solution is exact at this threshold
    return max(abs(float(Xs[:, j] @ yc)) / n for j in range(X.shape[1]))


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class LogisticClassifier(Learner):
    """Logistic regression via iteratively reweighted least squares.

    A ridge jitter of 1e-10 on the weighted Gram matrix keeps the Newton
    step solvable under (quasi-)separation.  If the fit has not converged
    after ``max_iter`` iterations the current iterate is returned and
    ``converged_`` is False; that is not an error.
    """

    kind = "classifier"
    param_names = ("lambda_", "max_iter")

    _JITTER = 1e-10

    def __init__(self, lambda_=0.0, max_iter=100):
        super().__init__()
        if lambda_ < 0:
            raise ValidationError(f"logistic penalty must be >= 0, got {lambda_}")
        self.lambda_ = float(lambda_)
        self.max_iter = int(max_iter)

    def _fit(self, X, y):
        n, p = X.shape
        Xd = np.hstack([np.ones((n, 1)), X])
        beta = np.zeros(p + 1)
        pen = np.full(p + 1, self.lambda_)
        pen[0] = 0.0  # intercept unpenalized
        self.converged_ = False
        for _ in range(self.max_iter):
            eta = Xd @ beta
            prob = _sigmoid(eta)
            w = prob * (1.0 - prob)
            grad = Xd.T @ (y - prob) - pen * beta
            hess = (Xd * w[:, None]).T @ Xd
            hess[np.diag_indices_from(hess)] += pen + self._JITTER
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hess, grad, rcond=None)[0]
            beta = beta + step
            if np.max(np.abs(step)) < 1e-10:
                self.converged_ = True
                break
        self.intercept_ = beta[0]
        self.coef_ = beta[1:]

    def _predict(self, X):
        return _sigmoid(X @ self.coef_ + self.intercept_)
