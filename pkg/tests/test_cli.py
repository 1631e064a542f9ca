import json
import os
from pathlib import Path

import numpy as np
import pytest

from orthoml import DgpConfig, make_plr_data
from orthoml.cli import main, parse_learner_spec
from orthoml.errors import ValidationError

GOLDEN = Path(__file__).parent / "golden"


def run_cli(argv, capsys=None):
    code = main(argv)
    return code


def _write_plr_csv(path, n=150, seed=5):
    data, _ = make_plr_data(DgpConfig(n_obs=n, dim_x=4, theta=0.5, seed=seed))
    data.to_csv(path)
    return data


# -- learner mini-grammar -----------------------------------------------------

def test_learner_grammar_parses_types():
    learner = parse_learner_spec("rf:max_depth=5,n_trees=10,seed=3", "regressor")
    params = learner.get_params()
    assert params["max_depth"] == 5 and params["n_trees"] == 10
    lasso = parse_learner_spec("lasso:lambda_=0.05", "regressor")
    assert lasso.get_params()["lambda_"] == 0.05
    clf = parse_learner_spec("rf:max_depth=4", "classifier")
    assert clf.kind == "classifier"


def test_learner_grammar_rejects_bad_input():
    with pytest.raises(ValidationError):
        parse_learner_spec("rf:max_depth", "regressor")
    with pytest.raises(ValidationError):
        parse_learner_spec("nosuch:a=1", "regressor")
    with pytest.raises(ValidationError, match="needs a classifier"):
        parse_learner_spec("ols", "classifier")


# -- fit ----------------------------------------------------------------------

def test_fit_missing_required_flag_exits_2(tmp_path, capsys):
    assert main(["fit", "--data", "x.csv", "--d", "d", "--model", "plr"]) == 2
    err = capsys.readouterr().err
    assert "--y" in err and "usage" in err


def test_fit_missing_learner_exits_2(tmp_path, capsys):
    csv = tmp_path / "d.csv"
    _write_plr_csv(csv)
    code = main(["fit", "--data", str(csv), "--y", "y", "--d", "d",
                 "--model", "plr", "--learner-l", "ols"])
    assert code == 2
    assert "--learner-m" in capsys.readouterr().err


def test_fit_no_split_guard(tmp_path, capsys):
    csv = tmp_path / "d.csv"
    _write_plr_csv(csv)
    base = ["fit", "--data", str(csv), "--y", "y", "--d", "d",
            "--model", "plr", "--learner-l", "ols", "--learner-m", "ols",
            "--n-folds", "1"]
    assert main(base) == 2
    assert main(base + ["--allow-no-split"]) == 0


def test_fit_missing_file_exits_2(capsys):
    code = main(["fit", "--data", "/nonexistent.csv", "--y", "y", "--d", "d",
                 "--model", "plr", "--learner-l", "ols", "--learner-m", "ols"])
    assert code == 2


def test_fit_degenerate_identification_exits_3(tmp_path, capsys):
    n = 60
    rows = ["y,d,x1"] + [f"{i * 1.0},{i % 2}.0,{(i % 2) * 1.0}" for i in range(n)]
    csv = tmp_path / "deg.csv"
    csv.write_text("\n".join(rows) + "\n")
    # treatment is an exact function of the covariate: zero residual
    code = main(["fit", "--data", str(csv), "--y", "y", "--d", "d",
                 "--model", "plr", "--learner-l", "ols", "--learner-m", "ols",
                 "--seed", "1"])
    assert code == 3


def test_fit_summary_and_json_schema(tmp_path, capsys):
    jsonschema = pytest.importorskip("jsonschema")
    csv = tmp_path / "d.csv"
    _write_plr_csv(csv)
    out = tmp_path / "fit.json"
    code = main(["fit", "--data", str(csv), "--y", "y", "--d", "d",
                 "--model", "plr", "--learner-l", "ols", "--learner-m", "ols",
                 "--seed", "7", "--bootstrap", "normal", "--n-boot", "500",
                 "--out", str(out)])
    assert code == 0
    stdout = capsys.readouterr().out
    for token in ("coef", "std err", "t", "P>|t|", "2.5 %", "97.5 %"):
        assert token in stdout

    import importlib.resources as resources
    schema = json.loads(resources.files("orthoml.schemas")
                        .joinpath("fit_result.schema.json").read_text())
    payload = json.loads(out.read_text())
    jsonschema.validate(payload, schema)
    assert payload["algorithm"] == "dml2"


def test_fit_forest_irm_covers_truth(tmp_path, capsys):
    from orthoml import make_irm_data
    data, _ = make_irm_data(DgpConfig(n_obs=600, theta=0.5, seed=3141))
    csv = tmp_path / "irm.csv"
    data.to_csv(csv)
    out = tmp_path / "irm.json"
    code = main(["fit", "--data", str(csv), "--y", "y", "--d", "d",
                 "--model", "irm",
                 "--learner-g", "rf:max_depth=5,n_trees=50",
                 "--learner-m", "rf:max_depth=5,n_trees=50",
                 "--n-folds", "5", "--seed", "11", "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    lo, hi = payload["ci"]
    assert lo < 0.5 < hi


# -- simulate -----------------------------------------------------------------

def test_simulate_deterministic_and_thread_invariant(tmp_path):
    args = ["simulate", "--n-reps", "6", "--n-obs", "90", "--theta", "0.5",
            "--learner", "rf:max_depth=3,n_trees=10", "--seed", "19",
            "--dim-x", "5"]
    outs = []
    for tag, threads in (("a", 1), ("b", 1), ("c", 4)):
        out = tmp_path / f"sim_{tag}.csv"
        assert main(args + ["--threads", str(threads), "--out", str(out)]) == 0
        outs.append((out.read_bytes(),
                     (tmp_path / f"sim_{tag}.summary.json").read_bytes()))
    assert outs[0] == outs[1]
    assert outs[0] == outs[2]


def test_simulate_single_rep_reports_sd_unavailable(tmp_path):
    out = tmp_path / "one.csv"
    assert main(["simulate", "--n-reps", "1", "--n-obs", "80", "--learner",
                 "ols", "--seed", "2", "--dim-x", "4", "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "rep,theta_naive,theta_nosplit,theta_dml"
    assert len(rows) == 2
    summary = json.loads((tmp_path / "one.summary.json").read_text())
    assert summary["estimators"]["dml"]["sd"] is None
    assert summary["dml_standardized"]["skewness"] is None


# -- coverage -----------------------------------------------------------------

def test_coverage_degenerate_alpha_one(tmp_path, capsys):
    out = tmp_path / "cov.csv"
    code = main(["coverage", "--model", "plr", "--n-reps", "10", "--n-obs",
                 "100", "--alpha", "1.0", "--learner-l", "ols",
                 "--learner-m", "ols", "--seed", "5", "--dim-x", "4",
                 "--out", str(out)])
    assert code == 0
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "algorithm,coverage,binom_se,n_reps"
    for row in rows[1:]:
        assert row.split(",")[1] == "0.0"


def test_coverage_thread_invariance(tmp_path):
    args = ["coverage", "--model", "plr", "--n-reps", "12", "--n-obs", "120",
            "--learner-l", "ols", "--learner-m", "ols", "--seed", "9",
            "--dim-x", "4"]
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(args + ["--threads", "1", "--out", str(a)]) == 0
    assert main(args + ["--threads", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_coverage_missing_learner_exits_2(capsys):
    assert main(["coverage", "--model", "irm", "--n-reps", "2", "--n-obs",
                 "50", "--learner-g", "ols", "--seed", "1"]) == 2


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert "orthoml" in capsys.readouterr().out


# -- golden files --------------------------------------------------------------

def test_golden_fit_json(tmp_path):
    csv = GOLDEN / "plr_small.csv"
    out = tmp_path / "fit.json"
    code = main(["fit", "--data", str(csv), "--y", "y", "--d", "d",
                 "--model", "plr", "--learner-l", "ols", "--learner-m", "ols",
                 "--n-folds", "4", "--seed", "123", "--out", str(out)])
    assert code == 0
    assert out.read_bytes() == (GOLDEN / "fit_expected.json").read_bytes()


def test_golden_simulate_csv(tmp_path):
    out = tmp_path / "sim.csv"
    code = main(["simulate", "--n-reps", "3", "--n-obs", "100", "--theta",
                 "0.5", "--learner", "ols", "--seed", "77", "--dim-x", "5",
                 "--out", str(out)])
    assert code == 0
    assert out.read_bytes() == (GOLDEN / "simulate_expected.csv").read_bytes()
    produced = json.loads((tmp_path / "sim.summary.json").read_text())
    expected = json.loads((GOLDEN / "simulate_expected.summary.json").read_text())
    assert produced == expected
