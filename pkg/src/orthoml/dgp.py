"""Synthetic data generators and the reference estimators used in
simulation studies.

Both generators draw covariates from a Gaussian with Toeplitz
correlation 0.7^|j-k| and share smooth nonlinear conditional means that
forests and lasso can both learn; a sparse linear variant is available
for near-oracle studies.  Generators return the evaluated true nuisance
values alongside the data so diagnostics and oracle estimators need no
re-derivation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DmlData
from .engine import solve_theta_dml2
from .errors import IdentificationError, ValidationError
from .learners import Learner
from .scores import NuisancePredictions, plr_score


@dataclass(frozen=True)
class DgpConfig:
    """Settings shared by the generators.

    ``noise_y`` and ``noise_d`` scale the outcome and first-stage shocks;
    ``nonlinear=False`` switches both conditional means to sparse linear
    forms.  ``propensity`` holds the two logit coefficients of the
    binary-treatment generator; zeroing them makes treatment independent
    of the covariates.
    """

    n_obs: int = 500
    dim_x: int = 20
    theta: float = 0.5
    seed: int = 0
    noise_y: float = 1.0
    noise_d: float = 1.0
    nonlinear: bool = True
    propensity: tuple = (1.0, -0.5)

    def __post_init__(self):
        if self.n_obs < 2:
            raise ValidationError(f"n_obs must be >= 2, got {self.n_obs}")
        if self.dim_x < 1:
            raise ValidationError(f"dim_x must be >= 1, got {self.dim_x}")
        if self.noise_y <= 0 or self.noise_d <= 0:
            raise ValidationError("noise scales must be > 0")


@dataclass(frozen=True)
class PlrTruth:
    """True nuisance values behind one generated PLR dataset."""

    theta: float
    g_values: np.ndarray    # g(X) in the outcome equation
    m_values: np.ndarray    # E[D|X]
    ell_values: np.ndarray  # E[Y|X] = theta * m + g


@dataclass(frozen=True)
class IrmTruth:
    """True nuisance values behind one generated binary-treatment dataset."""

    theta: float
    g_values: np.ndarray    # E[Y|X, D=0]
    m_values: np.ndarray    # P(D=1|X)
    mean_y0: float
    mean_y1: float


def _toeplitz_cholesky(dim: int) -> np.ndarray:
    idx = np.arange(dim)
    cov = 0.7 ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(cov)


def _draw_x(rng, n: int, dim: int) -> np.ndarray:
    return rng.standard_normal((n, dim)) @ _toeplitz_cholesky(dim).T


def _sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


def _nuisance_columns(dim: int):
    # Degrade gracefully below three covariates by reusing the last one.
    return 0, min(1, dim - 1), min(2, dim - 1)


def _m_fun(x: np.ndarray, nonlinear: bool) -> np.ndarray:
    c1, _, c3 = _nuisance_columns(x.shape[1])
    if nonlinear:
        return x[:, c1] + _sigmoid(x[:, c3])
    return x[:, c1] + 0.25 * x[:, c3]


def _g_fun(x: np.ndarray, nonlinear: bool) -> np.ndarray:
    c1, _, c3 = _nuisance_columns(x.shape[1])
    if nonlinear:
        return _sigmoid(x[:, c1]) + 0.25 * x[:, c3]
    return 0.25 * x[:, c1] + x[:, c3]


def make_plr_data(config: DgpConfig):
    """Partially linear data: D = m(X) + V, Y = theta*D + g(X) + noise.

    Returns (DmlData, PlrTruth).
    """
    rng = np.random.default_rng(config.seed)
    x = _draw_x(rng, config.n_obs, config.dim_x)
    v = rng.standard_normal(config.n_obs) * config.noise_d
    zeta = rng.standard_normal(config.n_obs) * config.noise_y
    m = _m_fun(x, config.nonlinear)
    g = _g_fun(x, config.nonlinear)
    d = m + v
    y = config.theta * d + g + zeta
    data = DmlData(y, d, x, y_col="y", d_cols=("d",),
                   x_cols=tuple(f"X{j + 1}" for j in range(config.dim_x)))
    truth = PlrTruth(theta=config.theta, g_values=g, m_values=m,
                     ell_values=config.theta * m + g)
    return data, truth


def make_irm_data(config: DgpConfig):
    """Binary-treatment data: D ~ Bernoulli(sigmoid(a*x1 + b*x2)),
    Y = theta*D + g(X) + noise.

    Returns (DmlData, IrmTruth); the truth record carries the propensity
    values and the sample means of both potential outcomes.
    """
    rng = np.random.default_rng(config.seed)
    x = _draw_x(rng, config.n_obs, config.dim_x)
    c1, c2, _ = _nuisance_columns(config.dim_x)
    a, b = config.propensity
    m = _sigmoid(a * x[:, c1] + b * x[:, c2])
    d = (rng.random(config.n_obs) < m).astype(np.float64)
    zeta = rng.standard_normal(config.n_obs) * config.noise_y
    g = _g_fun(x, config.nonlinear)
    y = config.theta * d + g + zeta
    data = DmlData(y, d, x, y_col="y", d_cols=("d",),
                   x_cols=tuple(f"X{j + 1}" for j in range(config.dim_x)))
    truth = IrmTruth(theta=config.theta, g_values=g, m_values=m,
                     mean_y0=float(np.mean(g)),
                     mean_y1=float(config.theta + np.mean(g)))
    return data, truth


def naive_plugin_estimator(data: DmlData, learner_g: Learner) -> float:
    """Plug-in estimate without an orthogonal score.

    Fits E[Y|X] on the full sample and regresses the outcome residual on
    the treatment without an intercept:
    theta = sum(d*(y - g_hat)) / sum(d^2).  The regularization bias of
    g_hat feeds straight into the estimate.
    """
    if data.p_d != 1:
        raise ValidationError("simulation estimators expect a single treatment")
    d = data.d[:, 0]
    denom = float(d @ d)
    if denom == 0.0:
        raise IdentificationError("sum(d^2) = 0; nothing to regress on")
    g_hat = learner_g.clone().fit(data.x, data.y).predict(data.x)
    return float(d @ (data.y - g_hat) / denom)


def orthogonal_no_split_estimator(data: DmlData, learner_l: Learner,
                                  learner_m: Learner) -> float:
    """Partialling-out estimate without sample splitting.

    Both nuisances are fitted and evaluated on the full sample, so
    overfitting learners leak into the residuals; the orthogonal score
    alone does not remove that bias.
    """
    if data.p_d != 1:
        raise ValidationError("simulation estimators expect a single treatment")
    d = data.d[:, 0]
    l_hat = learner_l.clone().fit(data.x, data.y).predict(data.x)
    m_hat = learner_m.clone().fit(data.x, d).predict(data.x)
    comps = plr_score("partialling_out", data.y, d,
                      NuisancePredictions(l_hat=l_hat, m_hat=m_hat))
    return solve_theta_dml2(comps.psi_a, comps.psi_b)
