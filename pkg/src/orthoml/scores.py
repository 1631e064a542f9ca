"""Orthogonal score functions, linear in the target parameter.

Every score is represented by per-observation components (psi_a, psi_b)
with the full score psi_i(theta) = psi_a_i * theta + psi_b_i.  Linearity
lets the estimation engine solve the empirical moment condition in
closed form and reuse stored components for variance estimation and the
multiplier bootstrap without refitting.

Implemented score families:

* partially linear regression ('partialling-out' and 'iv-type'),
* interactive regression ('ATE' and 'ATTE'),
* partially linear IV regression (partialling-out form),
* interactive IV regression (local average treatment effect).

A finite-difference diagnostic is included to probe the defining
property of these scores in simulations: the derivative of the mean
score with respect to nuisance perturbations vanishes at the truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import IdentificationError, ScoreLinearityError, ValidationError

PLR_VARIANTS = ("partialling_out", "iv_type")
IRM_VARIANTS = ("ATE", "ATTE")


@dataclass(frozen=True)
class ScoreComponents:
    """Per-observation score pieces; psi(theta) = psi_a * theta + psi_b."""

    psi_a: np.ndarray
    psi_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.psi_a, dtype=np.float64)
        b = np.asarray(self.psi_b, dtype=np.float64)
        if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape or a.shape[0] < 1:
            raise ValidationError("score components must be equal-length vectors")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValidationError("score components contain non-finite values")
        object.__setattr__(self, "psi_a", a)
        object.__setattr__(self, "psi_b", b)

    @property
    def n(self) -> int:
        return self.psi_a.shape[0]

    def at(self, theta: float) -> np.ndarray:
        return self.psi_a * theta + self.psi_b


@dataclass(frozen=True)
class NuisancePredictions:
    """Cross-fitted per-observation nuisance predictions.

    Which fields are required depends on the model:
      partially linear:      l_hat = E[Y|X], m_hat = E[D|X], g_hat optional
      interactive:           g0_hat, g1_hat = E[Y|X, D=d], m_hat = P(D=1|X)
      partially linear IV:   l_hat, m_hat = E[Z|X], r_hat = E[D|X]
      interactive IV:        g0_hat, g1_hat over Z arms, m_hat = P(Z=1|X),
                             r0_hat, r1_hat = E[D|X, Z=z]
    """

    l_hat: np.ndarray | None = None
    m_hat: np.ndarray | None = None
    g_hat: np.ndarray | None = None
    g0_hat: np.ndarray | None = None
    g1_hat: np.ndarray | None = None
    r_hat: np.ndarray | None = None
    r0_hat: np.ndarray | None = None
    r1_hat: np.ndarray | None = None

    SLOTS = ("l_hat", "m_hat", "g_hat", "g0_hat", "g1_hat",
             "r_hat", "r0_hat", "r1_hat")

    def __post_init__(self):
        n = None
        for slot in self.SLOTS:
            vec = getattr(self, slot)
            if vec is None:
                continue
            vec = np.asarray(vec, dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(vec)):
                raise ValidationError(f"prediction '{slot}' contains non-finite values")
            if n is None:
                n = vec.shape[0]
            elif vec.shape[0] != n:
                raise ValidationError(
                    f"prediction '{slot}' has length {vec.shape[0]}, expected {n}")
            object.__setattr__(self, slot, vec)

    def require(self, *slots: str) -> tuple:
        missing = [s for s in slots if getattr(self, s) is None]
        if missing:
            raise ValidationError(f"missing nuisance prediction(s): {missing}")
        return tuple(getattr(self, s) for s in slots)

    def subset(self, idx: np.ndarray) -> "NuisancePredictions":
        kw = {slot: (getattr(self, slot)[idx] if getattr(self, slot) is not None
                     else None) for slot in self.SLOTS}
        return NuisancePredictions(**kw)


def _check_binary(vec: np.ndarray, what: str):
    if not np.all((vec == 0.0) | (vec == 1.0)):
        raise ValidationError(f"{what} must be binary (exact 0/1 values)")


def trim_propensity(m_hat: np.ndarray, trim: float):
    """Clamp probability predictions into [trim, 1 - trim].

    Returns the clipped copy and the count of clipped entries.  Clamping
    is idempotent.  trim must lie in [0, 0.5).
    """
    if not 0.0 <= trim < 0.5:
        raise ValidationError(f"trim threshold must be in [0, 0.5), got {trim}")
    clipped = np.clip(m_hat, trim, 1.0 - trim)
    return clipped, int(np.sum(clipped != m_hat))


def plr_score(variant: str, y, d, preds: NuisancePredictions,
              theta: float = 0.0) -> ScoreComponents:
    """Score components for the partially linear regression model.

    partialling_out:  psi_a = -(d - m_hat)^2
                      psi_b = (y - l_hat) * (d - m_hat)
    iv_type:          psi_a = -d * (d - m_hat)
                      psi_b = (y - g_hat) * (d - m_hat)

    ``theta`` is accepted for signature symmetry with callable scores;
    linearity makes the components independent of it.
    """
    variant = variant.replace("-", "_")
    if variant not in PLR_VARIANTS:
        raise ValidationError(f"unknown PLR score variant '{variant}'")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if variant == "partialling_out":
        l_hat, m_hat = preds.require("l_hat", "m_hat")
        d_res = d - m_hat
        return ScoreComponents(psi_a=-d_res * d_res, psi_b=(y - l_hat) * d_res)
    m_hat, g_hat = preds.require("m_hat", "g_hat")
    d_res = d - m_hat
    return ScoreComponents(psi_a=-d * d_res, psi_b=(y - g_hat) * d_res)


def irm_score(variant: str, y, d, preds: NuisancePredictions,
              trim: float = 0.01) -> ScoreComponents:
    """AIPW-style score components for the interactive regression model.

    ATE:   psi_a = -1
           psi_b = g1 - g0 + d*(y - g1)/m - (1-d)*(y - g0)/(1-m)
    ATTE:  with p = mean(d):
           psi_a = -d / p
           psi_b = d*(y - g0)/p - m*(1-d)*(y - g0)/(p*(1-m))

    The propensity m is clamped into [trim, 1-trim] before use.  For
    ATTE, p is the treated share of the observations passed in, so the
    caller controls whether it is fold-local or global.
    """
    if variant not in IRM_VARIANTS:
        raise ValidationError(f"unknown IRM score variant '{variant}'")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    _check_binary(d, "treatment")
    if variant == "ATE":
        g0, g1, m = preds.require("g0_hat", "g1_hat", "m_hat")
        m, _ = trim_propensity(m, trim)
        psi_b = g1 - g0 + d * (y - g1) / m - (1.0 - d) * (y - g0) / (1.0 - m)
        return ScoreComponents(psi_a=np.full(y.shape[0], -1.0), psi_b=psi_b)
    g0, m = preds.require("g0_hat", "m_hat")
    m, _ = trim_propensity(m, trim)
    p_hat = d.mean()
    if p_hat == 0.0:
        raise IdentificationError("ATTE requires at least one treated observation")
    resid0 = y - g0
    psi_b = d * resid0 / p_hat - m * (1.0 - d) * resid0 / (p_hat * (1.0 - m))
    return ScoreComponents(psi_a=-d / p_hat, psi_b=psi_b)


def pliv_score(y, d, z, preds: NuisancePredictions,
               theta: float = 0.0) -> ScoreComponents:
    """Partialling-out score components for the partially linear IV model.

    psi_a = -(d - r_hat) * (z - m_hat)
    psi_b = (y - l_hat) * (z - m_hat)
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if z is None:
        raise ValidationError("instrument column required for the IV model")
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    l_hat, m_hat, r_hat = preds.require("l_hat", "m_hat", "r_hat")
    z_res = z - m_hat
    return ScoreComponents(psi_a=-(d - r_hat) * z_res, psi_b=(y - l_hat) * z_res)


def iivm_score(y, d, z, preds: NuisancePredictions,
               trim: float = 0.01) -> ScoreComponents:
    """Local-average-treatment-effect score for the interactive IV model.

    psi_b =  g1 - g0 + z*(y - g1)/m - (1-z)*(y - g0)/(1-m)
    psi_a = -(r1 - r0 + z*(d - r1)/m - (1-z)*(d - r0)/(1-m))
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if z is None:
        raise ValidationError("instrument column required for the IV model")
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    _check_binary(d, "treatment")
    _check_binary(z, "instrument")
    g0, g1, m, r0, r1 = preds.require("g0_hat", "g1_hat", "m_hat",
                                      "r0_hat", "r1_hat")
    m, _ = trim_propensity(m, trim)
    psi_b = g1 - g0 + z * (y - g1) / m - (1.0 - z) * (y - g0) / (1.0 - m)
    psi_a = -(r1 - r0 + z * (d - r1) / m - (1.0 - z) * (d - r0) / (1.0 - m))
    return ScoreComponents(psi_a=psi_a, psi_b=psi_b)


ScoreCallable = Callable[..., ScoreComponents]


def components_from_callable(fn: ScoreCallable, y, d, x, z,
                             preds: NuisancePredictions) -> ScoreComponents:
    """Evaluate a user-supplied score callable and verify it is linear
    in theta.

    The callable has signature (y, d, x, z, preds, theta) and returns
    ScoreComponents.  Linearity is checked by assembling the full score
    at theta = 0 and 1 and requiring the extrapolation to match a third
    evaluation at theta = 2 within 1e-10.
    """
    c0 = fn(y, d, x, z, preds, 0.0)
    c1 = fn(y, d, x, z, preds, 1.0)
    c2 = fn(y, d, x, z, preds, 2.0)
    if not (isinstance(c0, ScoreComponents) and isinstance(c1, ScoreComponents)
            and isinstance(c2, ScoreComponents)):
        raise ValidationError("score callable must return ScoreComponents")
    psi0 = c0.at(0.0)
    psi1 = c1.at(1.0)
    psi2 = c2.at(2.0)
    slope = psi1 - psi0
    if np.max(np.abs(psi0 + 2.0 * slope - psi2)) > 1e-10:
        raise ScoreLinearityError("score not linear in theta")
    return ScoreComponents(psi_a=slope, psi_b=psi0)


def orthogonality_diagnostic(score_fn: Callable[[Mapping], ScoreComponents],
                             theta: float,
                             nuisances: Mapping[str, np.ndarray],
                             directions: Mapping[str, np.ndarray],
                             eps_grid=1e-3) -> dict:
    """Finite-difference derivative of the mean score along nuisance
    perturbations, evaluated at the supplied (true) nuisance values.

    ``score_fn`` maps a nuisance dict to ScoreComponents.  For each slot
    in ``directions`` the perturbed nuisance is nu + eps * h and the
    central difference of mean psi(theta) is taken at every eps in the
    grid.  Orthogonal scores give derivatives near zero; non-orthogonal
    ones do not.  Simulation tooling only: requires true nuisances.

    Returns slot -> derivative (scalar for a scalar eps, else an array
    aligned with the grid).
    """
    scalar = np.isscalar(eps_grid)
    eps_list = [float(eps_grid)] if scalar else [float(e) for e in eps_grid]
    if any(e <= 0 for e in eps_list):
        raise ValidationError("finite-difference step must be positive")

    def mean_psi(nu: dict) -> float:
        return float(score_fn(nu).at(theta).mean())

    out = {}
    for slot, h in directions.items():
        if slot not in nuisances:
            raise ValidationError(f"unknown nuisance slot '{slot}'")
        h = np.asarray(h, dtype=np.float64).reshape(-1)
        derivs = []
        for eps in eps_list:
            up = dict(nuisances)
            dn = dict(nuisances)
            up[slot] = nuisances[slot] + eps * h
            dn[slot] = nuisances[slot] - eps * h
            derivs.append((mean_psi(up) - mean_psi(dn)) / (2.0 * eps))
        out[slot] = derivs[0] if scalar else np.asarray(derivs)
    return out
