"""Cross-fitted estimation core.

For each repetition and fold, nuisance learners are fitted on the
training indices and predictions are produced on the held-out fold, so
every observation's score uses out-of-fold predictions.  The linear
score components are then pooled (dml2) or solved per fold and averaged
(dml1), standard errors come from the sandwich formula, and repetitions
are aggregated by the median rule.  Stored score arrays support the
multiplier bootstrap and p-value adjustments as pure post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ._seeds import substream
from .data import DmlData, check_binary_treatment
from .errors import (IdentificationError, LearnerError, ValidationError)
from .gaussian import norm_ppf, two_sided_p
from .learners import Learner
from .resampling import FoldScheme, make_folds, no_split_scheme
from .scores import (NuisancePredictions, components_from_callable,
                     iivm_score, irm_score, pliv_score, plr_score,
                     trim_propensity)

_MODELS = {
    "plr": dict(scores=("partialling_out", "iv_type"),
                default_score="partialling_out", needs_z=False, binary_d=False),
    "pliv": dict(scores=("partialling_out",),
                 default_score="partialling_out", needs_z=True, binary_d=False),
    "irm": dict(scores=("ATE", "ATTE"), default_score="ATE",
                needs_z=False, binary_d=True),
    "iivm": dict(scores=("LATE",), default_score="LATE",
                 needs_z=True, binary_d=True),
}

_SLOT_IDS = {"l_hat": 1, "m_hat": 2, "g_hat": 3, "g0_hat": 4, "g1_hat": 5,
             "r_hat": 6, "r0_hat": 7, "r1_hat": 8}

_IDENT_TOL = 1e-12
_BOOT_CHUNK = 8192


@dataclass
class FitSpec:
    """Everything that defines one estimation run.

    ``learners`` maps nuisance slots to unfitted learners; required slots
    are 'l'/'m' (plr; plus 'g' for the iv-type score), 'g'/'m' (irm),
    'l'/'m'/'r' (pliv) and 'g'/'m'/'r' (iivm).  ``score`` may also be a
    callable (y, d, x, z, preds, theta) -> ScoreComponents, which is
    checked for linearity in theta at fit time.
    """

    model: str
    learners: Mapping[str, Learner]
    score: str | Callable | None = None
    n_folds: int = 5
    n_rep: int = 1
    seed: int = 0
    algorithm: str = "dml2"
    trim: float = 0.01
    alpha: float = 0.05
    stratify: bool = False
    folds: FoldScheme | None = None
    allow_no_split: bool = False


@dataclass
class FitResult:
    """Coefficients with inference detail, one entry per treatment column.

    Score arrays are stored per repetition so that the multiplier
    bootstrap and diagnostics can run without refitting.
    """

    model: str
    score_name: str
    algorithm: str
    treatment_names: tuple
    alpha: float
    n_obs: int
    n_folds: int
    n_rep: int
    coef: np.ndarray
    se: np.ndarray
    t_stat: np.ndarray
    p_value: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    rep_thetas: np.ndarray      # (p, n_rep)
    rep_ses: np.ndarray         # (p, n_rep)
    fold_thetas: np.ndarray | None   # (p, n_rep, k) for dml1
    psi_a: np.ndarray           # (p, n_rep, n)
    psi_b: np.ndarray           # (p, n_rep, n)
    schemes: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_coef(self) -> int:
        return self.coef.shape[0]

    def psi(self, coef_idx: int, rep: int) -> np.ndarray:
        """Full score psi(theta_r) for one coefficient and repetition."""
        return (self.psi_a[coef_idx, rep] * self.rep_thetas[coef_idx, rep]
                + self.psi_b[coef_idx, rep])

    def summary(self) -> str:
        """Fixed-width coefficient table."""
        lo_lab = f"{self.alpha / 2 * 100:g} %"
        hi_lab = f"{(1 - self.alpha / 2) * 100:g} %"
        headers = ["coef", "std err", "t", "P>|t|", lo_lab, hi_lab]
        rows = []
        for j, name in enumerate(self.treatment_names):
            rows.append([name] + [f"{v:.4f}" for v in
                                  (self.coef[j], self.se[j], self.t_stat[j],
                                   self.p_value[j], self.ci_lower[j],
                                   self.ci_upper[j])])
        name_w = max(len(r[0]) for r in rows)
        widths = [max(len(h), max(len(r[i + 1]) for r in rows))
                  for i, h in enumerate(headers)]
        lines = [" " * name_w + "  " +
                 "  ".join(h.rjust(w) for h, w in zip(headers, widths))]
        for r in rows:
            lines.append(r[0].ljust(name_w) + "  " +
                         "  ".join(v.rjust(w) for v, w in zip(r[1:], widths)))
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        def one_or_list(arr):
            return float(arr[0]) if self.n_coef == 1 else [float(v) for v in arr]

        ci = ([float(self.ci_lower[0]), float(self.ci_upper[0])]
              if self.n_coef == 1 else
              [[float(lo), float(hi)] for lo, hi in zip(self.ci_lower, self.ci_upper)])
        return {
            "model": self.model,
            "score": self.score_name,
            "algorithm": self.algorithm,
            "treatments": list(self.treatment_names),
            "coef": one_or_list(self.coef),
            "se": one_or_list(self.se),
            "t": one_or_list(self.t_stat),
            "p": one_or_list(self.p_value),
            "ci": ci,
            "alpha": self.alpha,
            "n_obs": self.n_obs,
            "n_folds": self.n_folds,
            "n_rep": self.n_rep,
        }


# ---------------------------------------------------------------------------
# moment-equation solvers, variance, aggregation
# ---------------------------------------------------------------------------

def solve_theta_dml2(psi_a, psi_b) -> float:
    """Solve mean(psi_a)*theta + mean(psi_b) = 0 over the pooled sample."""
    psi_a = np.asarray(psi_a, dtype=np.float64)
    psi_b = np.asarray(psi_b, dtype=np.float64)
    jac = psi_a.mean()
    if abs(jac) <= _IDENT_TOL:
        raise IdentificationError(
            f"|mean(psi_a)| = {abs(jac):.2e} <= {_IDENT_TOL}; "
            "the target parameter is not identified")
    return float(-psi_b.mean() / jac)


def solve_theta_dml1(psi_a, psi_b, fold_indices):
    """Solve the moment equation per fold and average the solutions.

    Returns (theta_hat, per-fold theta_k).  Any unidentified fold raises
    with the fold number.
    """
    psi_a = np.asarray(psi_a, dtype=np.float64)
    psi_b = np.asarray(psi_b, dtype=np.float64)
    thetas = np.empty(len(fold_indices))
    for k, idx in enumerate(fold_indices):
        jac = psi_a[idx].mean()
        if abs(jac) <= _IDENT_TOL:
            raise IdentificationError(
                f"fold {k}: |mean(psi_a)| <= {_IDENT_TOL}; fold-wise moment "
                "equation has no solution")
        thetas[k] = -psi_b[idx].mean() / jac
    return float(thetas.mean()), thetas


def standard_error(psi_at_theta, psi_a) -> float:
    """Sandwich standard error sqrt(mean(psi^2) / mean(psi_a)^2 / n)."""
    psi = np.asarray(psi_at_theta, dtype=np.float64)
    psi_a = np.asarray(psi_a, dtype=np.float64)
    if psi.shape != psi_a.shape:
        raise ValidationError("psi and psi_a must have equal length")
    jac = psi_a.mean()
    if abs(jac) <= _IDENT_TOL:
        raise IdentificationError("zero Jacobian in variance computation")
    sigma2 = np.mean(psi * psi) / (jac * jac)
    return float(math.sqrt(sigma2 / psi.shape[0]))


def aggregate_repetitions(rep_thetas, rep_ses):
    """Median-aggregate repeated cross-fitting runs.

    theta = median_r(theta_r); se = sqrt(median_r(se_r^2 + (theta_r -
    theta)^2)), which folds the across-repetition spread into the
    reported uncertainty.  Identity for a single repetition.
    """
    rep_thetas = np.asarray(rep_thetas, dtype=np.float64)
    rep_ses = np.asarray(rep_ses, dtype=np.float64)
    theta = float(np.median(rep_thetas))
    se = float(math.sqrt(np.median(rep_ses ** 2 + (rep_thetas - theta) ** 2)))
    return theta, se


# ---------------------------------------------------------------------------
# nuisance cross-fitting
# ---------------------------------------------------------------------------

def _fit_predict(learner, X, y, train, test, seed, context, diagnostics):
    try:
        fitted = learner.reseeded(seed).fit(X[train], y[train])
        pred = fitted.predict(X[test])
    except (ValidationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise LearnerError(f"{context}: {exc}") from exc
    if not getattr(fitted, "converged_", True):
        diagnostics.setdefault("unconverged", []).append(context)
    return pred


def _slot_seed(master_seed, treat_idx, rep, fold, slot):
    return substream(master_seed, treat_idx + 1, rep + 1, fold + 1,
                     _SLOT_IDS[slot])


def cross_fit_predictions(model: str, score, learners: Mapping[str, Learner],
                          X: np.ndarray, y: np.ndarray, d: np.ndarray,
                          z: np.ndarray | None, scheme: FoldScheme, rep: int,
                          seed: int, treat_idx: int = 0,
                          diagnostics: dict | None = None) -> NuisancePredictions:
    """Out-of-fold nuisance predictions for one repetition.

    Every observation is predicted exactly once per nuisance; the result
    is checked for completeness before being returned.
    """
    diagnostics = diagnostics if diagnostics is not None else {}
    n = y.shape[0]
    needs_g1 = not (model == "irm" and score == "ATTE")
    slots: dict[str, np.ndarray] = {}

    def alloc(*names):
        for name in names:
            slots[name] = np.full(n, np.nan)

    if model == "plr":
        alloc("l_hat", "m_hat")
    elif model == "pliv":
        alloc("l_hat", "m_hat", "r_hat")
    elif model == "irm":
        alloc("g0_hat", "m_hat")
        if needs_g1:
            alloc("g1_hat")
    else:
        alloc("g0_hat", "g1_hat", "m_hat", "r0_hat", "r1_hat")

    for fold in range(scheme.k):
        train = scheme.train_indices(rep, fold)
        test = scheme.test_indices(rep, fold)
        where = f"rep {rep}, fold {fold}"

        def run(slot, learner_key, target, rows=None):
            rows = train if rows is None else rows
            if rows.size == 0:
                raise LearnerError(
                    f"{where}: no training observations for nuisance '{slot}'")
            ctx = f"nuisance '{slot}' ({where})"
            slots[slot][test] = _fit_predict(
                learners[learner_key], X, target, rows, test,
                _slot_seed(seed, treat_idx, rep, fold, slot), ctx, diagnostics)

        if model == "plr":
            run("l_hat", "l", y)
            run("m_hat", "m", d)
        elif model == "pliv":
            run("l_hat", "l", y)
            run("m_hat", "m", z)
            run("r_hat", "r", d)
        elif model == "irm":
            run("g0_hat", "g", y, train[d[train] == 0.0])
            if needs_g1:
                run("g1_hat", "g", y, train[d[train] == 1.0])
            run("m_hat", "m", d)
        else:  # iivm
            run("g0_hat", "g", y, train[z[train] == 0.0])
            run("g1_hat", "g", y, train[z[train] == 1.0])
            run("m_hat", "m", z)
            run("r0_hat", "r", d, train[z[train] == 0.0])
            run("r1_hat", "r", d, train[z[train] == 1.0])

    for name, vec in slots.items():
        if np.isnan(vec).any():
            raise AssertionError(f"cross-fitting left gaps in '{name}'")
    return NuisancePredictions(**slots)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _normalize_score(model: str, score):
    info = _MODELS[model]
    if score is None:
        return info["default_score"]
    if callable(score):
        return score
    canon = score.replace("-", "_")
    if canon in info["scores"]:
        return canon
    raise ValidationError(
        f"score '{score}' is not available for model '{model}'; "
        f"choose from {list(info['scores'])} or pass a callable")


def _required_slots(model: str, score) -> tuple:
    if model == "plr":
        return ("l", "m", "g") if score == "iv_type" else ("l", "m")
    if model == "pliv":
        return ("l", "m", "r")
    if model == "irm":
        return ("g", "m")
    return ("g", "m", "r")


def _check_learner_kinds(model, score, learners, d_binary, z_binary):
    must_regress = {"l", "g"}
    must_classify = set()
    if model == "irm":
        must_classify.add("m")
    if model == "iivm":
        must_classify.update({"m", "r"})
    for slot in _required_slots(model, score):
        if slot not in learners:
            raise ValidationError(
                f"model '{model}' with score '{getattr(score, '__name__', score)}' "
                f"requires a learner for slot '{slot}'")
        kind = learners[slot].kind
        if slot in must_regress and kind != "regressor":
            raise ValidationError(f"slot '{slot}' requires a regressor")
        if slot in must_classify and kind != "classifier":
            raise ValidationError(f"slot '{slot}' requires a classifier")
        if kind == "classifier" and slot not in must_classify:
            # classifiers are conditional means only for binary targets
            target_binary = {"m": z_binary if model == "pliv" else d_binary,
                             "r": d_binary}.get(slot, False)
            if not target_binary:
                raise ValidationError(
                    f"slot '{slot}' got a classifier but its target is not binary")


def _build_components(model, score, y, d, z, x, preds, trim):
    if callable(score):
        return components_from_callable(score, y, d, x, z, preds)
    if model == "plr":
        return plr_score(score, y, d, preds)
    if model == "irm":
        return irm_score(score, y, d, preds, trim)
    if model == "pliv":
        return pliv_score(y, d, z, preds)
    return iivm_score(y, d, z, preds, trim)


def _solve_rep(model, score, y, d, z, x, preds, trim, algorithm, scheme, rep):
    n = y.shape[0]
    if algorithm == "dml2":
        comps = _build_components(model, score, y, d, z, x, preds, trim)
        theta = solve_theta_dml2(comps.psi_a, comps.psi_b)
        return comps.psi_a, comps.psi_b, theta, None
    psi_a = np.empty(n)
    psi_b = np.empty(n)
    fold_thetas = np.empty(scheme.k)
    for k in range(scheme.k):
        idx = scheme.test_indices(rep, k)
        comps = _build_components(
            model, score, y[idx], d[idx],
            z[idx] if z is not None else None, x[idx], preds.subset(idx), trim)
        psi_a[idx] = comps.psi_a
        psi_b[idx] = comps.psi_b
        jac = comps.psi_a.mean()
        if abs(jac) <= _IDENT_TOL:
            raise IdentificationError(
                f"fold {k} (rep {rep}): moment equation unidentified")
        fold_thetas[k] = -comps.psi_b.mean() / jac
    return psi_a, psi_b, float(fold_thetas.mean()), fold_thetas


def fit(data: DmlData, spec: FitSpec) -> FitResult:
    """Run the full cross-fitted estimation described by ``spec``.

    With several treatment columns, each is fitted one at a time with the
    remaining treatment columns appended to the covariates.  All
    randomness derives from ``spec.seed``, so repeated calls are
    bit-identical.
    """
    model = spec.model.lower()
    if model not in _MODELS:
        raise ValidationError(f"unknown model '{spec.model}'; "
                              f"choose from {sorted(_MODELS)}")
    info = _MODELS[model]
    score = _normalize_score(model, spec.score)
    if spec.algorithm not in ("dml1", "dml2"):
        raise ValidationError(f"unknown algorithm '{spec.algorithm}'")
    if not 0.0 < spec.alpha <= 1.0:
        raise ValidationError(f"significance level must be in (0, 1], got {spec.alpha}")
    if not 0.0 <= spec.trim < 0.5:
        raise ValidationError(f"trim threshold must be in [0, 0.5), got {spec.trim}")

    if info["needs_z"]:
        if data.z is None:
            raise ValidationError(f"model '{model}' requires an instrument column")
        if data.z.shape[1] != 1:
            raise ValidationError(
                f"model '{model}' supports a single instrument column, "
                f"got {data.z.shape[1]}")
    z1 = data.z[:, 0] if data.z is not None and info["needs_z"] else None

    binary = check_binary_treatment(data)
    if info["binary_d"] and not binary.all():
        bad = [name for name, ok in zip(data.d_cols, binary) if not ok]
        raise ValidationError(
            f"model '{model}' requires binary treatment(s); non-binary: {bad}")
    z_binary = z1 is not None and bool(np.all((z1 == 0.0) | (z1 == 1.0)))
    if model == "iivm" and not z_binary:
        raise ValidationError("model 'iivm' requires a binary instrument")

    _check_learner_kinds(model, score, spec.learners, bool(binary.all()), z_binary)

    n, p = data.n, data.p_d
    if spec.folds is not None:
        if spec.folds.n != n:
            raise ValidationError(
                f"external fold scheme covers {spec.folds.n} observations, "
                f"data has {n}")
        if spec.folds.no_split and not spec.allow_no_split:
            raise ValidationError(
                "no-split scheme requires allow_no_split=True (diagnostics only)")
    elif spec.n_folds == 1 and not spec.allow_no_split:
        raise ValidationError(
            "n_folds=1 disables cross-fitting; pass allow_no_split=True "
            "if this diagnostics mode is intended")

    score_name = score.__name__ if callable(score) else (
        "LATE" if model == "iivm" else score)

    diagnostics: dict = {}
    n_rep = spec.folds.n_rep if spec.folds is not None else spec.n_rep
    k = spec.folds.k if spec.folds is not None else spec.n_folds
    if n_rep < 1:
        raise ValidationError(f"n_rep must be >= 1, got {spec.n_rep}")

    rep_thetas = np.empty((p, n_rep))
    rep_ses = np.empty((p, n_rep))
    fold_thetas = (np.empty((p, n_rep, k)) if spec.algorithm == "dml1" else None)
    psi_a_store = np.empty((p, n_rep, n))
    psi_b_store = np.empty((p, n_rep, n))
    trim_counts = np.zeros((p, n_rep), dtype=np.int64)
    schemes = []

    for j in range(p):
        d_j = data.d[:, j]
        others = [jj for jj in range(p) if jj != j]
        x_eff = np.hstack([data.x, data.d[:, others]]) if others else data.x

        if spec.folds is not None:
            scheme = spec.folds
        elif k == 1:
            scheme = no_split_scheme(n, n_rep)
        else:
            strat = None
            if spec.stratify:
                if not binary[j]:
                    raise ValidationError(
                        f"stratified folds require a binary treatment "
                        f"(column '{data.d_cols[j]}')")
                strat = d_j
            scheme = make_folds(n, k, n_rep, spec.seed, stratify_on=strat)
        schemes.append(scheme)

        for r in range(n_rep):
            preds = cross_fit_predictions(model, score, spec.learners, x_eff,
                                          data.y, d_j, z1, scheme, r,
                                          spec.seed, j, diagnostics)
            if score == "iv_type":
                preds = _add_iv_type_g(spec.learners, x_eff, data.y, d_j,
                                       preds, scheme, r, spec.seed, j,
                                       diagnostics)
            if preds.m_hat is not None and model in ("irm", "iivm"):
                trim_counts[j, r] = trim_propensity(preds.m_hat, spec.trim)[1]
            psi_a, psi_b, theta_r, ft = _solve_rep(
                model, score, data.y, d_j, z1, x_eff, preds, spec.trim,
                spec.algorithm, scheme, r)
            psi_a_store[j, r] = psi_a
            psi_b_store[j, r] = psi_b
            rep_thetas[j, r] = theta_r
            rep_ses[j, r] = standard_error(psi_a * theta_r + psi_b, psi_a)
            if ft is not None:
                fold_thetas[j, r] = ft

    coef = np.empty(p)
    se = np.empty(p)
    for j in range(p):
        coef[j], se[j] = aggregate_repetitions(rep_thetas[j], rep_ses[j])

    t_stat = coef / se
    p_value = np.array([two_sided_p(t) for t in t_stat])
    zcrit = norm_ppf(1.0 - spec.alpha / 2.0) if spec.alpha < 1.0 else 0.0
    ci_lower = coef - zcrit * se
    ci_upper = coef + zcrit * se

    diagnostics["trim_count"] = trim_counts
    return FitResult(
        model=model, score_name=score_name, algorithm=spec.algorithm,
        treatment_names=tuple(data.d_cols), alpha=spec.alpha, n_obs=n,
        n_folds=k, n_rep=n_rep, coef=coef, se=se, t_stat=t_stat,
        p_value=p_value, ci_lower=ci_lower, ci_upper=ci_upper,
        rep_thetas=rep_thetas, rep_ses=rep_ses, fold_thetas=fold_thetas,
        psi_a=psi_a_store, psi_b=psi_b_store, schemes=tuple(schemes),
        diagnostics=diagnostics)


def _add_iv_type_g(learners, X, y, d, preds, scheme, rep, seed, treat_idx,
                   diagnostics):
    """Cross-fit the iv-type structural nuisance.

    The target E[Y - theta*D | X] depends on theta, so a preliminary
    partialling-out estimate from the already cross-fitted (l, m)
    predictions pins it down before the g learner is fitted per fold.
    """
    comps = plr_score("partialling_out", y, d, preds)
    theta_prelim = solve_theta_dml2(comps.psi_a, comps.psi_b)
    target = y - theta_prelim * d
    g_hat = np.full(y.shape[0], np.nan)
    for fold in range(scheme.k):
        train = scheme.train_indices(rep, fold)
        test = scheme.test_indices(rep, fold)
        ctx = f"nuisance 'g_hat' (rep {rep}, fold {fold})"
        g_hat[test] = _fit_predict(
            learners["g"], X, target, train, test,
            _slot_seed(seed, treat_idx, rep, fold, "g_hat"), ctx, diagnostics)
    if np.isnan(g_hat).any():
        raise AssertionError("cross-fitting left gaps in 'g_hat'")
    return NuisancePredictions(l_hat=preds.l_hat, m_hat=preds.m_hat, g_hat=g_hat)


# ---------------------------------------------------------------------------
# multiplier bootstrap, joint intervals, p-value adjustment
# ---------------------------------------------------------------------------

_SQRT5 = math.sqrt(5.0)


def _draw_multipliers(rng, kind, shape):
    if callable(kind):
        return np.asarray(kind(rng, shape), dtype=np.float64)
    if kind == "normal":
        return rng.standard_normal(shape)
    if kind == "bayes":
        return rng.exponential(1.0, shape) - 1.0
    if kind == "wild":
        lo = (1.0 - _SQRT5) / 2.0
        hi = (1.0 + _SQRT5) / 2.0
        p_lo = (_SQRT5 + 1.0) / (2.0 * _SQRT5)
        return np.where(rng.random(shape) < p_lo, lo, hi)
    raise ValidationError(
        f"unknown multiplier kind '{kind}'; choose normal, bayes or wild")


@dataclass(frozen=True)
class BootstrapResult:
    """Bootstrapped t-statistics, shape (n_rep, n_boot, n_coef).

    Within a draw the same multipliers are applied to every coefficient,
    which is what makes max-|t| joint inference valid.
    """

    t_star: np.ndarray
    weight_kind: str
    seed: int

    @property
    def n_boot(self) -> int:
        return self.t_star.shape[1]

    @property
    def n_coef(self) -> int:
        return self.t_star.shape[2]


def bootstrap(result: FitResult, weight_kind="normal", n_boot: int = 500,
              seed: int = 0) -> BootstrapResult:
    """Multiplier bootstrap on the stored score arrays.

    Per repetition r and draw b with i.i.d. mean-zero unit-variance
    multipliers xi shared across coefficients:

        t*_(b,j) = sum_i xi_i * psi_ij(theta_rj) / (n * |mean(psi_a_j)| * se_rj)

    Multiplier kinds: 'normal' N(0,1), 'bayes' Exp(1)-1, 'wild' the
    two-point distribution with third moment one.  A callable
    (rng, shape) -> array is accepted as a test hook.
    """
    if n_boot < 1:
        raise ValidationError(f"n_boot must be >= 1, got {n_boot}")
    n_rep, p, n = result.n_rep, result.n_coef, result.n_obs
    t_star = np.empty((n_rep, n_boot, p))
    for r in range(n_rep):
        psi_mat = np.stack([result.psi(j, r) for j in range(p)], axis=1)
        denom = np.array([
            n * abs(result.psi_a[j, r].mean()) * result.rep_ses[j, r]
            for j in range(p)])
        if np.any(denom <= 0):
            raise IdentificationError("degenerate score; bootstrap undefined")
        rng = np.random.default_rng(substream(seed, r))
        done = 0
        while done < n_boot:
            blk = min(_BOOT_CHUNK, n_boot - done)
            xi = _draw_multipliers(rng, weight_kind, (blk, n))
            t_star[r, done:done + blk] = (xi @ psi_mat) / denom
            done += blk
    kind_name = weight_kind if isinstance(weight_kind, str) else "custom"
    return BootstrapResult(t_star=t_star, weight_kind=kind_name, seed=seed)


def joint_critical_value(boot: BootstrapResult, alpha: float) -> float:
    """Median over repetitions of the (1-alpha) quantile of max_j |t*|."""
    if not 0.0 < alpha <= 1.0:
        raise ValidationError(f"significance level must be in (0, 1], got {alpha}")
    crits = [float(np.quantile(np.abs(boot.t_star[r]).max(axis=1), 1.0 - alpha))
             for r in range(boot.t_star.shape[0])]
    return float(np.median(crits))


def joint_confint(result: FitResult, boot: BootstrapResult,
                  alpha: float | None = None) -> np.ndarray:
    """Simultaneous confidence intervals theta_j +/- c* se_j, shape (p, 2)."""
    if boot.n_coef != result.n_coef:
        raise ValidationError("bootstrap and fit have different coefficient counts")
    alpha = result.alpha if alpha is None else alpha
    crit = joint_critical_value(boot, alpha)
    return np.column_stack([result.coef - crit * result.se,
                            result.coef + crit * result.se])


def p_adjust(result: FitResult, method: str = "romano-wolf",
             boot: BootstrapResult | None = None) -> np.ndarray:
    """Multiple-testing adjusted p-values for the fitted coefficients.

    'bonferroni' and 'holm' work from the marginal p-values; 'romano-wolf'
    runs the step-down max-|t*| procedure on bootstrap draws and requires
    ``boot``.  A single coefficient is returned unadjusted by every
    method.
    """
    method = method.lower()
    if method not in ("bonferroni", "holm", "romano-wolf"):
        raise ValidationError(f"unknown adjustment method '{method}'")
    p_raw = result.p_value.copy()
    p = p_raw.shape[0]
    if p == 1:
        return p_raw
    if method == "bonferroni":
        return np.minimum(1.0, p * p_raw)
    if method == "holm":
        order = np.argsort(p_raw)
        factors = p - np.arange(p)
        stepped = np.minimum(1.0, np.maximum.accumulate(factors * p_raw[order]))
        out = np.empty(p)
        out[order] = stepped
        return out
    if boot is None:
        raise ValidationError("romano-wolf adjustment requires bootstrap draws")
    if boot.n_coef != p:
        raise ValidationError("bootstrap and fit have different coefficient counts")

    t_abs = np.abs(result.t_stat)
    order = np.argsort(-t_abs)
    per_rep = np.empty((result.n_rep, p))
    for r in range(result.n_rep):
        ts = np.abs(boot.t_star[r])
        p_init = np.empty(p)
        for s in range(p):
            null = ts[:, order[s:]].max(axis=1)
            p_init[s] = np.mean(null >= t_abs[order[s]])
        stepped = np.maximum.accumulate(p_init)
        per_rep[r, order] = stepped
    return np.median(per_rep, axis=0)
