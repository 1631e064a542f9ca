"""Batch command-line front end.

Three subcommands: ``fit`` estimates a causal parameter from a CSV file,
``simulate`` runs the three-estimator bias experiment (plug-in without an
orthogonal score, orthogonal score without sample splitting, and the full
cross-fitted estimator), and ``coverage`` measures confidence-interval
coverage over simulated replications.  All output is CSV/JSON and every
run is a pure function of its flags: fixed seeds give byte-identical
files at any thread count.

Exit codes: 0 success, 2 validation/usage error, 3 identification or
learner failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from ._seeds import substream
from .data import DmlData
from .dgp import (DgpConfig, make_irm_data, make_plr_data,
                  naive_plugin_estimator, orthogonal_no_split_estimator)
from .engine import (FitSpec, bootstrap, cross_fit_predictions, fit,
                     joint_confint, solve_theta_dml1, solve_theta_dml2,
                     standard_error)
from .errors import (IdentificationError, LearnerError, NotFittedError,
                     ScoreLinearityError, ValidationError)
from .gaussian import norm_ppf
from .learners import builtin
from .resampling import make_folds
from .scores import plr_score, irm_score

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ESTIMATION = 3

_GENERIC_LEARNERS = {"rf": ("random_forest_reg", "random_forest_clf")}


def parse_learner_spec(text: str, want: str = "regressor"):
    """Parse the ``name:key=val,key=val`` learner mini-grammar.

    'rf' resolves to the regression or classification forest depending on
    the slot it is used for.
    """
    name, _, paramtext = text.partition(":")
    name = name.strip()
    if name in _GENERIC_LEARNERS:
        name = _GENERIC_LEARNERS[name][0 if want == "regressor" else 1]
    params = {}
    if paramtext.strip():
        for item in paramtext.split(","):
            key, sep, raw = item.partition("=")
            key = key.strip()
            raw = raw.strip()
            if not sep or not key:
                raise ValidationError(
                    f"bad learner parameter {item!r}; expected key=value")
            params[key] = _parse_value(raw)
    learner = builtin(name, params)
    if learner.kind != want:
        raise ValidationError(
            f"learner '{name}' is a {learner.kind} but this slot needs a {want}")
    return learner


def _parse_value(raw: str):
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _float_cell(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

_SLOT_KINDS = {
    "plr": {"l": "regressor", "m": "regressor", "g": "regressor"},
    "pliv": {"l": "regressor", "m": "regressor", "r": "regressor"},
    "irm": {"g": "regressor", "m": "classifier"},
    "iivm": {"g": "regressor", "m": "classifier", "r": "classifier"},
}

_REQUIRED_SLOTS = {
    ("plr", "partialling-out"): ("l", "m"),
    ("plr", "iv-type"): ("l", "m", "g"),
    ("pliv", "partialling-out"): ("l", "m", "r"),
    ("irm", "ATE"): ("g", "m"),
    ("irm", "ATTE"): ("g", "m"),
    ("iivm", "LATE"): ("g", "m", "r"),
}

_DEFAULT_SCORES = {"plr": "partialling-out", "pliv": "partialling-out",
                   "irm": "ATE", "iivm": "LATE"}


def cmd_fit(args) -> int:
    score = args.score or _DEFAULT_SCORES[args.model]
    key = (args.model, score)
    if key not in _REQUIRED_SLOTS:
        raise ValidationError(
            f"score '{score}' is not available for model '{args.model}'")
    slots = _REQUIRED_SLOTS[key]
    learners = {}
    for slot in slots:
        spec_text = getattr(args, f"learner_{slot}")
        if spec_text is None:
            raise ValidationError(
                f"model '{args.model}' with score '{score}' requires "
                f"--learner-{slot}")
        learners[slot] = parse_learner_spec(spec_text, _SLOT_KINDS[args.model][slot])

    if args.n_folds == 1 and not args.allow_no_split:
        raise ValidationError(
            "--n-folds 1 disables cross-fitting; pass --allow-no-split "
            "if this diagnostics mode is intended")
    if args.n_boot is not None and args.bootstrap is None:
        raise ValidationError("--n-boot given without --bootstrap")

    d_cols = [c.strip() for c in args.d.split(",")]
    z_cols = [c.strip() for c in args.z.split(",")] if args.z else None
    x_cols = [c.strip() for c in args.x.split(",")] if args.x else None
    data = DmlData.from_csv(args.data, args.y, d_cols, x_cols, z_cols)

    spec = FitSpec(model=args.model, learners=learners, score=score,
                   n_folds=args.n_folds, n_rep=args.n_reps, seed=args.seed,
                   algorithm=args.algorithm, trim=args.trim, alpha=args.alpha,
                   stratify=args.stratify, allow_no_split=args.allow_no_split)
    result = fit(data, spec)
    print(result.summary())

    payload = result.to_json_dict()
    if args.bootstrap is not None:
        boot = bootstrap(result, weight_kind=args.bootstrap,
                         n_boot=args.n_boot or 500, seed=substream(args.seed, 101))
        joint = joint_confint(result, boot)
        payload["bootstrap"] = {
            "kind": args.bootstrap,
            "n_boot": int(boot.n_boot),
            "joint_ci": ([float(joint[0, 0]), float(joint[0, 1])]
                         if result.n_coef == 1 else
                         [[float(lo), float(hi)] for lo, hi in joint]),
        }
        print(f"\njoint {100 * (1 - result.alpha):g}% CI "
              f"({args.bootstrap} multipliers, B={boot.n_boot}):")
        for name, (lo, hi) in zip(result.treatment_names, joint):
            print(f"  {name}: [{lo:.4f}, {hi:.4f}]")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _simulate_rep(rep, args):
    rep_seed = substream(args.seed, rep)
    cfg = DgpConfig(n_obs=args.n_obs, dim_x=args.dim_x, theta=args.theta,
                    seed=rep_seed, noise_y=args.noise_y, noise_d=args.noise_d,
                    nonlinear=not args.linear_dgp)
    data, _ = make_plr_data(cfg)
    template = parse_learner_spec(args.learner, "regressor")
    theta_naive = naive_plugin_estimator(data, template.reseeded(substream(rep_seed, 1)))
    theta_nosplit = orthogonal_no_split_estimator(
        data, template.reseeded(substream(rep_seed, 2)),
        template.reseeded(substream(rep_seed, 3)))
    spec = FitSpec(model="plr",
                   learners={"l": template, "m": template},
                   n_folds=args.n_folds, seed=substream(rep_seed, 4))
    res = fit(data, spec)
    return theta_naive, theta_nosplit, float(res.coef[0]), float(res.se[0])


def _run_indexed(fn, n_reps, threads):
    if threads <= 1:
        return [fn(r) for r in range(n_reps)]
    out = [None] * n_reps
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for r, value in zip(range(n_reps), pool.map(fn, range(n_reps))):
            out[r] = value
    return out


def _moments(values: np.ndarray):
    centered = values - values.mean()
    m2 = np.mean(centered ** 2)
    if m2 == 0.0:
        return 0.0, 0.0
    skew = float(np.mean(centered ** 3) / m2 ** 1.5)
    kurt = float(np.mean(centered ** 4) / m2 ** 2 - 3.0)
    return skew, kurt


def cmd_simulate(args) -> int:
    parse_learner_spec(args.learner, "regressor")  # fail fast on bad specs
    rows = _run_indexed(lambda r: _simulate_rep(r, args), args.n_reps,
                        args.threads)
    with open(args.out, "w", newline="") as fh:
        fh.write("rep,theta_naive,theta_nosplit,theta_dml\n")
        for r, (tn, ts, td, _) in enumerate(rows):
            fh.write(f"{r},{_float_cell(tn)},{_float_cell(ts)},{_float_cell(td)}\n")

    arr = np.asarray([(tn, ts, td) for tn, ts, td, _ in rows])
    ses = np.asarray([se for *_, se in rows])
    many = args.n_reps > 1
    summary = {
        "theta_true": args.theta,
        "n_reps": args.n_reps,
        "n_obs": args.n_obs,
        "n_folds": args.n_folds,
        "learner": args.learner,
        "seed": args.seed,
        "estimators": {},
    }
    for name, col in (("naive", 0), ("nosplit", 1), ("dml", 2)):
        vals = arr[:, col]
        summary["estimators"][name] = {
            "mean_bias": float(np.mean(vals - args.theta)),
            "sd": float(np.std(vals, ddof=1)) if many else None,
        }
    zstats = (arr[:, 2] - args.theta) / ses
    skew, kurt = _moments(zstats) if many else (None, None)
    if many:
        n = args.n_reps
        skew_z = skew / np.sqrt(6.0 / n)
        kurt_z = kurt / np.sqrt(24.0 / n)
        normality = {"skewness": skew, "excess_kurtosis": kurt,
                     "skew_z": float(skew_z), "kurtosis_z": float(kurt_z)}
    else:
        normality = {"skewness": None, "excess_kurtosis": None,
                     "skew_z": None, "kurtosis_z": None}
    summary["dml_standardized"] = normality
    sidecar = os.path.splitext(args.out)[0] + ".summary.json"
    with open(sidecar, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out} and {sidecar}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------

def _coverage_rep(rep, args, learners):
    rep_seed = substream(args.seed, rep)
    cfg = DgpConfig(n_obs=args.n_obs, dim_x=args.dim_x, theta=args.theta,
                    seed=rep_seed, noise_y=args.noise_y, noise_d=args.noise_d,
                    nonlinear=not args.linear_dgp)
    if args.model == "plr":
        data, _ = make_plr_data(cfg)
        score = "partialling_out"
    else:
        data, _ = make_irm_data(cfg)
        score = "ATE"
    fit_seed = substream(rep_seed, 4)
    scheme = make_folds(data.n, args.n_folds, 1, fit_seed)
    fitted = {slot: lrn.reseeded(substream(rep_seed, 5, i))
              for i, (slot, lrn) in enumerate(learners.items())}
    preds = cross_fit_predictions(args.model, score, fitted, data.x, data.y,
                                  data.d[:, 0], None, scheme, 0, fit_seed)
    if args.model == "plr":
        comps = plr_score(score, data.y, data.d[:, 0], preds)
    else:
        comps = irm_score(score, data.y, data.d[:, 0], preds, args.trim)

    zcrit = norm_ppf(1.0 - args.alpha / 2.0) if args.alpha < 1.0 else 0.0
    folds = [scheme.test_indices(0, k) for k in range(scheme.k)]
    covered = {}
    for algorithm in ("dml1", "dml2"):
        if algorithm == "dml1":
            theta, _ = solve_theta_dml1(comps.psi_a, comps.psi_b, folds)
        else:
            theta = solve_theta_dml2(comps.psi_a, comps.psi_b)
        se = standard_error(comps.psi_a * theta + comps.psi_b, comps.psi_a)
        covered[algorithm] = bool(abs(theta - args.theta) <= zcrit * se)
    return covered


def cmd_coverage(args) -> int:
    learners = {}
    if args.model == "plr":
        for slot in ("l", "m"):
            text = getattr(args, f"learner_{slot}")
            if text is None:
                raise ValidationError(f"model 'plr' requires --learner-{slot}")
            learners[slot] = parse_learner_spec(text, "regressor")
    else:
        for slot, kind in (("g", "regressor"), ("m", "classifier")):
            text = getattr(args, f"learner_{slot}")
            if text is None:
                raise ValidationError(f"model 'irm' requires --learner-{slot}")
            learners[slot] = parse_learner_spec(text, kind)

    rows = _run_indexed(lambda r: _coverage_rep(r, args, learners),
                        args.n_reps, args.threads)
    m = args.n_reps
    lines = ["algorithm,coverage,binom_se,n_reps"]
    table = {}
    for algorithm in ("dml1", "dml2"):
        cov = float(np.mean([row[algorithm] for row in rows]))
        se = float(np.sqrt(cov * (1.0 - cov) / m))
        table[algorithm] = (cov, se)
        lines.append(f"{algorithm},{_float_cell(cov)},{_float_cell(se)},{m}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    print(f"coverage of nominal {100 * (1 - args.alpha):g}% intervals, "
          f"theta0={args.theta}, n={args.n_obs}, M={m}")
    print(f"{'algorithm':<10} {'coverage':>9} {'binom se':>9}")
    for algorithm, (cov, se) in table.items():
        print(f"{algorithm:<10} {cov:>9.4f} {se:>9.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthoml",
        description="Cross-fitted orthogonal-score estimation of causal "
                    "parameters with ML nuisance models.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="estimate a causal parameter from CSV data")
    p_fit.add_argument("--data", required=True, help="input CSV path")
    p_fit.add_argument("--y", required=True, help="outcome column")
    p_fit.add_argument("--d", required=True,
                       help="treatment column(s), comma separated")
    p_fit.add_argument("--x", default=None,
                       help="covariate columns (default: all unassigned)")
    p_fit.add_argument("--z", default=None, help="instrument column")
    p_fit.add_argument("--model", required=True,
                       choices=("plr", "pliv", "irm", "iivm"))
    p_fit.add_argument("--score", default=None,
                       choices=("partialling-out", "iv-type", "ATE", "ATTE", "LATE"))
    for slot in ("l", "m", "g", "r"):
        p_fit.add_argument(f"--learner-{slot}", default=None, metavar="SPEC",
                           help=f"learner for nuisance slot '{slot}', "
                                "e.g. rf:max_depth=5,n_trees=100")
    p_fit.add_argument("--n-folds", type=int, default=5)
    p_fit.add_argument("--n-reps", type=int, default=1)
    p_fit.add_argument("--algorithm", choices=("dml1", "dml2"), default="dml2")
    p_fit.add_argument("--alpha", type=float, default=0.05)
    p_fit.add_argument("--trim", type=float, default=0.01)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--stratify", action="store_true",
                       help="stratify folds on the binary treatment")
    p_fit.add_argument("--allow-no-split", action="store_true",
                       help="permit --n-folds 1 (diagnostics only)")
    p_fit.add_argument("--bootstrap", choices=("normal", "bayes", "wild"),
                       default=None, help="run a multiplier bootstrap")
    p_fit.add_argument("--n-boot", type=int, default=None)
    p_fit.add_argument("--out", default=None, help="write result JSON here")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser(
        "simulate",
        help="per-replication estimates of the three-estimator bias experiment")
    p_sim.add_argument("--n-reps", type=int, required=True)
    p_sim.add_argument("--n-obs", type=int, required=True)
    p_sim.add_argument("--theta", type=float, default=0.5)
    p_sim.add_argument("--learner", required=True, metavar="SPEC",
                       help="regression learner used for every nuisance")
    p_sim.add_argument("--n-folds", type=int, default=5)
    p_sim.add_argument("--dim-x", type=int, default=20)
    p_sim.add_argument("--noise-y", type=float, default=1.0)
    p_sim.add_argument("--noise-d", type=float, default=1.0)
    p_sim.add_argument("--linear-dgp", action="store_true")
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.set_defaults(func=cmd_simulate)

    p_cov = sub.add_parser("coverage",
                           help="confidence-interval coverage study")
    p_cov.add_argument("--model", required=True, choices=("plr", "irm"))
    p_cov.add_argument("--n-reps", type=int, required=True)
    p_cov.add_argument("--n-obs", type=int, required=True)
    p_cov.add_argument("--alpha", type=float, default=0.05)
    p_cov.add_argument("--theta", type=float, default=0.5)
    p_cov.add_argument("--dim-x", type=int, default=20)
    p_cov.add_argument("--n-folds", type=int, default=5)
    p_cov.add_argument("--trim", type=float, default=0.01)
    p_cov.add_argument("--noise-y", type=float, default=1.0)
    p_cov.add_argument("--noise-d", type=float, default=1.0)
    p_cov.add_argument("--linear-dgp", action="store_true")
    for slot in ("l", "m", "g"):
        p_cov.add_argument(f"--learner-{slot}", default=None, metavar="SPEC")
    p_cov.add_argument("--seed", type=int, required=True)
    p_cov.add_argument("--threads", type=int, default=1)
    p_cov.add_argument("--out", default=None, help="optional output CSV path")
    p_cov.set_defaults(func=cmd_coverage)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, NotFittedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IdentificationError, LearnerError, ScoreLinearityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
