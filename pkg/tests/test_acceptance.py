"""End-to-end acceptance suite.

Each test prints one PASS/FAIL line per criterion (run with -s to see
them live).  The Monte Carlo experiments use fixed master seeds, so
every run of this module reproduces the same numbers bit for bit.

Documented experiment settings
------------------------------
* Bias experiment (three estimators, partially linear DGP): n=500,
  theta0=0.5, dim_x=20, 500 replications, K=5 folds, dml2.
  - "well-regularized" run: forests max_depth=5, n_trees=100 (seed 314159)
  - "overfitting" run: fully grown forests min_leaf=1, n_trees=100
    (seed 271828)
* Binary-treatment end-to-end: n=1000, theta0=0.5, forest regressor
  (depth 5) + forest classifier (depth 5, all features), K=5, dml2,
  100 seeds.
* Coverage: sparse linear DGP, lasso (lambda=0.05) nuisances, n=1000,
  M=500, alpha=0.05.
"""

import json
import math
import os
import time
import numpy as np
import pytest

import orthoml as om
from orthoml._seeds import substream
from orthoml.cli import main as cli_main
from orthoml.gaussian import norm_ppf
from orthoml.resampling import make_folds
from orthoml.scores import NuisancePredictions, ScoreComponents, plr_score

THREADS = max(1, min(4, os.cpu_count() or 1))


def report(criterion: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def bias_run_depth5(tmp_path_factory):
    out = tmp_path_factory.mktemp("a1") / "depth5.csv"
    t0 = time.time()
    code = cli_main(["simulate", "--n-reps", "500", "--n-obs", "500",
                     "--theta", "0.5", "--learner", "rf:max_depth=5,n_trees=100",
                     "--seed", "314159", "--threads", str(THREADS),
                     "--out", str(out)])
    elapsed = time.time() - t0
    assert code == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    sidecar = json.loads((out.parent / "depth5.summary.json").read_text())
    return rows, sidecar, elapsed


@pytest.fixture(scope="module")
def bias_run_fullgrown(tmp_path_factory):
    out = tmp_path_factory.mktemp("a2") / "deep.csv"
    code = cli_main(["simulate", "--n-reps", "500", "--n-obs", "500",
                     "--theta", "0.5", "--learner", "rf:min_leaf=1,n_trees=100",
                     "--seed", "271828", "--threads", str(THREADS),
                     "--out", str(out)])
    assert code == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    sidecar = json.loads((out.parent / "deep.summary.json").read_text())
    return rows, sidecar


def test_a1_non_orthogonal_bias_direction(bias_run_depth5):
    rows, sidecar, elapsed = bias_run_depth5
    theta0 = 0.5
    naive = rows[:, 1]
    dml = rows[:, 3]
    bias_naive = abs(naive.mean() - theta0)
    bias_dml = abs(dml.mean() - theta0)
    mc_se_naive = naive.std(ddof=1) / math.sqrt(len(naive))
    ok = bias_naive > 5.0 * bias_dml and bias_naive > 3.0 * mc_se_naive
    report("A1 bias direction",
           ok, f"|naive bias|={bias_naive:.4f}, |dml bias|={bias_dml:.5f}, "
               f"3*mc_se={3 * mc_se_naive:.5f}")
    budget = 600.0 if (os.cpu_count() or 1) >= 2 else 1200.0
    report("A1 runtime", elapsed < budget,
           f"{elapsed:.0f}s with {THREADS} thread(s) (budget {budget:.0f}s)")


def test_a2_overfitting_bias_direction(bias_run_fullgrown):
    rows, _ = bias_run_fullgrown
    theta0 = 0.5
    bias_nosplit = abs(rows[:, 2].mean() - theta0)
    bias_dml = abs(rows[:, 3].mean() - theta0)
    report("A2 overfitting bias", bias_nosplit > 2.0 * bias_dml,
           f"|nosplit bias|={bias_nosplit:.4f} vs 2*|dml bias|="
           f"{2 * bias_dml:.4f}")


def test_a3_dml_validity_and_normality(bias_run_depth5):
    rows, sidecar, _ = bias_run_depth5
    theta0 = 0.5
    dml = rows[:, 3]
    mc_se = dml.std(ddof=1) / math.sqrt(len(dml))
    bias = dml.mean() - theta0
    skew = sidecar["dml_standardized"]["skewness"]
    kurt = sidecar["dml_standardized"]["excess_kurtosis"]
    report("A3 dml unbiasedness", abs(bias) <= 3.0 * mc_se,
           f"bias={bias:+.5f}, 3*mc_se={3 * mc_se:.5f}")
    report("A3 normality sanity", abs(skew) < 0.3 and abs(kurt) < 0.5,
           f"skewness={skew:+.3f}, excess kurtosis={kurt:+.3f}")


def test_a4_binary_treatment_end_to_end():
    successes = 0
    estimates = []
    for s in range(100):
        data, _ = om.make_irm_data(om.DgpConfig(
            n_obs=1000, theta=0.5, seed=substream(1000, s)))
        spec = om.FitSpec(
            model="irm",
            learners={"g": om.ForestRegressor(max_depth=5, n_trees=100),
                      "m": om.ForestClassifier(max_depth=5, n_trees=100,
                                               max_features="all")},
            n_folds=5, seed=substream(2000, s))
        res = om.fit(data, spec)
        estimates.append(res.coef[0])
        in_range = 0.30 <= res.coef[0] <= 0.70
        covers = res.ci_lower[0] <= 0.5 <= res.ci_upper[0]
        successes += int(in_range and covers)
    report("A4 end-to-end", successes >= 95,
           f"{successes}/100 seeds with estimate in [0.30, 0.70] and "
           f"covering CI (mean estimate {np.mean(estimates):.4f})")


def test_a5_coverage_with_lasso(tmp_path):
    out = tmp_path / "coverage.csv"
    code = cli_main(["coverage", "--model", "plr", "--n-reps", "500",
                     "--n-obs", "1000", "--alpha", "0.05",
                     "--learner-l", "lasso:lambda_=0.05",
                     "--learner-m", "lasso:lambda_=0.05",
                     "--linear-dgp", "--seed", "4242",
                     "--threads", str(THREADS), "--out", str(out)])
    assert code == 0
    table = {line.split(",")[0]: float(line.split(",")[1])
             for line in out.read_text().strip().splitlines()[1:]}
    ok = all(0.90 <= cov <= 0.98 for cov in table.values())
    report("A5 lasso coverage", ok,
           f"dml1={table['dml1']:.3f}, dml2={table['dml2']:.3f} "
           f"(target [0.90, 0.98])")


def test_a6_orthogonality_diagnostic():
    n = 100_000
    data, truth = om.make_plr_data(om.DgpConfig(n_obs=n, dim_x=20, theta=0.5,
                                                seed=999))
    y, d = data.y, data.d[:, 0]
    h = data.x[:, 0]

    def orth_fn(nu):
        return plr_score("partialling_out", y, d, NuisancePredictions(**nu))

    orth = om.orthogonality_diagnostic(
        orth_fn, truth.theta,
        {"l_hat": truth.ell_values, "m_hat": truth.m_values},
        {"l_hat": h, "m_hat": h})
    ok_orth = all(abs(v) < 0.02 for v in orth.values())
    report("A6 orthogonal score derivative", ok_orth,
           f"l-direction {orth['l_hat']:+.5f}, m-direction "
           f"{orth['m_hat']:+.5f} (bound 0.02)")

    def naive_fn(nu):
        return ScoreComponents(psi_a=-d * d, psi_b=(y - nu["g_hat"]) * d)

    naive = om.orthogonality_diagnostic(
        naive_fn, truth.theta, {"g_hat": truth.g_values}, {"g_hat": h})

    # population value of -E[D * X1] by Gauss-Hermite quadrature:
    # E[x1 * sigmoid(x3)] = Cov(x1,x3) * E[sigmoid'(x3)] by Stein's lemma
    nodes, weights = np.polynomial.hermite.hermgauss(80)
    z = math.sqrt(2.0) * nodes
    sig = 1.0 / (1.0 + np.exp(-z))
    e_sig_prime = float(weights @ (sig * (1.0 - sig)) / math.sqrt(math.pi))
    analytic = -(1.0 + 0.49 * e_sig_prime)
    rel_err = abs(naive["g_hat"] - analytic) / abs(analytic)
    report("A6 naive score derivative", rel_err < 0.10,
           f"fd={naive['g_hat']:+.4f} vs analytic {analytic:+.4f} "
           f"(rel err {rel_err:.3%})")


def test_a7_exact_algebraic_properties():
    rng = np.random.default_rng(7)

    # dml2 moment-equation residual
    worst = 0.0
    for _ in range(200):
        psi_a = rng.standard_normal(60) - 2.0
        psi_b = rng.standard_normal(60)
        theta = om.solve_theta_dml2(psi_a, psi_b)
        worst = max(worst, abs(np.mean(psi_a * theta + psi_b)))
    report("A7 dml2 moment residual", worst < 1e-10, f"max |mean psi|={worst:.2e}")

    # interactive-model score: psi_a identically -1 and dml1 == dml2 on
    # equal-size folds
    data, _ = om.make_irm_data(om.DgpConfig(n_obs=500, theta=0.5, seed=70))
    learners = {"g": om.OlsRegressor(), "m": om.LogisticClassifier()}
    res1 = om.fit(data, om.FitSpec(model="irm", learners=learners, n_folds=5,
                                   seed=3, algorithm="dml1"))
    res2 = om.fit(data, om.FitSpec(model="irm", learners=learners, n_folds=5,
                                   seed=3, algorithm="dml2"))
    ok = (np.all(res1.psi_a[0, 0] == -1.0)
          and abs(res1.coef[0] - res2.coef[0]) < 1e-10)
    report("A7 interactive score identities", ok,
           f"psi_a==-1 and |dml1-dml2|={abs(res1.coef[0] - res2.coef[0]):.2e}")

    # linearity extrapolation at 1e-12
    comps = plr_score("partialling_out", rng.standard_normal(50),
                      rng.standard_normal(50),
                      NuisancePredictions(l_hat=rng.standard_normal(50),
                                          m_hat=rng.standard_normal(50)))
    t1, t2, t3 = -1.0, 2.0, 5.0
    extrap = comps.at(t1) + (comps.at(t2) - comps.at(t1)) / (t2 - t1) * (t3 - t1)
    lin_err = float(np.max(np.abs(extrap - comps.at(t3))))
    report("A7 score linearity", lin_err < 1e-12, f"max extrapolation error {lin_err:.2e}")

    # fold partition properties over 1000 random draws
    for _ in range(1000):
        n = int(rng.integers(2, 300))
        k = int(rng.integers(2, n + 1))
        scheme = make_folds(n, k, 1, int(rng.integers(0, 2 ** 62)))
        folds = [scheme.test_indices(0, j) for j in range(k)]
        sizes = [f.size for f in folds]
        assert max(sizes) - min(sizes) <= 1
        assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))
    report("A7 fold partitions", True, "1000 random (n, k, seed) draws valid")

    # standard-error scale equivariance
    psi_a = rng.standard_normal(100) - 2.0
    psi_b = rng.standard_normal(100)
    theta = om.solve_theta_dml2(psi_a, psi_b)
    se = om.standard_error(psi_a * theta + psi_b, psi_a)
    se_scaled = om.standard_error(7.0 * (psi_a * theta + psi_b), 7.0 * psi_a)
    report("A7 se scale equivariance", abs(se - se_scaled) < 1e-12,
           f"|se - se_scaled|={abs(se - se_scaled):.2e}")

    # confidence-interval width identity
    rng2 = np.random.default_rng(71)
    x = rng2.standard_normal((200, 3))
    d = x[:, 0] + rng2.standard_normal(200)
    y = 0.5 * d + x[:, 1] + rng2.standard_normal(200)
    res = om.fit(om.DmlData(y, d, x),
                 om.FitSpec(model="plr",
                            learners={"l": om.OlsRegressor(),
                                      "m": om.OlsRegressor()},
                            n_folds=4, seed=1, alpha=0.05))
    width_err = abs((res.ci_upper[0] - res.ci_lower[0])
                    - 2.0 * norm_ppf(0.975) * res.se[0])
    report("A7 ci width identity", width_err < 1e-12, f"error {width_err:.2e}")


def test_a8_bootstrap_calibration():
    rng = np.random.default_rng(606)
    n = 1000
    x = rng.standard_normal((n, 3))
    d = x[:, 0] + rng.standard_normal(n)
    y = 0.5 * d + x[:, 1] + rng.standard_normal(n)
    res = om.fit(om.DmlData(y, d, x),
                 om.FitSpec(model="plr",
                            learners={"l": om.OlsRegressor(),
                                      "m": om.OlsRegressor()},
                            n_folds=5, seed=8))
    boot = om.bootstrap(res, "normal", n_boot=100_000, seed=606)
    t = boot.t_star[0, :, 0]
    q_signed = float(np.quantile(t, 0.975))
    q_abs = float(np.quantile(np.abs(t), 0.95))
    ok = 1.90 <= q_signed <= 2.02 and 1.90 <= q_abs <= 2.02
    report("A8 bootstrap quantile", ok,
           f"97.5% quantile of t*={q_signed:.4f}, 95% quantile of |t*|="
           f"{q_abs:.4f} (target [1.90, 2.02])")

    res3 = _three_coef_result()
    bonf = om.p_adjust(res3, "bonferroni")
    holm = om.p_adjust(res3, "holm")
    ok_adjust = (np.allclose(bonf, [0.03, 0.06, 0.12], atol=1e-15)
                 and np.allclose(holm, [0.03, 0.04, 0.04], atol=1e-15))
    report("A8 p-value adjustments", ok_adjust,
           f"bonferroni={np.round(bonf, 4).tolist()}, "
           f"holm={np.round(holm, 4).tolist()}")


def _three_coef_result():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((300, 3))
    d = rng.standard_normal((300, 3)) + x[:, :1]
    y = d @ [0.5, 0.6, 0.7] + x[:, 1] + rng.standard_normal(300)
    res = om.fit(om.DmlData(y, d, x, d_cols=("d1", "d2", "d3")),
                 om.FitSpec(model="plr",
                            learners={"l": om.OlsRegressor(),
                                      "m": om.OlsRegressor()},
                            n_folds=4, seed=2))
    res.p_value[:] = [0.01, 0.02, 0.04]
    return res


def test_a9_determinism_across_runs_and_threads(tmp_path):
    data, _ = om.make_irm_data(om.DgpConfig(n_obs=300, theta=0.5, seed=90))
    csv = tmp_path / "d.csv"
    data.to_csv(csv)
    fit_args = ["fit", "--data", str(csv), "--y", "y", "--d", "d",
                "--model", "irm", "--learner-g", "rf:max_depth=4,n_trees=30",
                "--learner-m", "rf:max_depth=4,n_trees=30", "--seed", "55",
                "--bootstrap", "wild", "--n-boot", "800"]
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / f"fit_{tag}.json"
        assert cli_main(fit_args + ["--out", str(out)]) == 0
        runs.append(out.read_bytes())
    report("A9 fit determinism", runs[0] == runs[1],
           "two runs produced byte-identical JSON")

    sim_args = ["simulate", "--n-reps", "8", "--n-obs", "120",
                "--theta", "0.5", "--learner", "rf:max_depth=3,n_trees=20",
                "--seed", "66", "--dim-x", "6"]
    outputs = []
    for tag, threads in (("t1", 1), ("t4", 4)):
        out = tmp_path / f"sim_{tag}.csv"
        assert cli_main(sim_args + ["--threads", str(threads),
                                    "--out", str(out)]) == 0
        outputs.append(out.read_bytes()
                       + (tmp_path / f"sim_{tag}.summary.json").read_bytes())
    report("A9 thread invariance", outputs[0] == outputs[1],
           "1-thread and 4-thread runs produced byte-identical CSV/JSON")
