"""End-to-end acceptance checks.

Each test prints one ``[criterion N] PASS|FAIL`` line with the measured
quantity next to its threshold. The simulation studies are long (tens of
minutes in total on one core); they run by default.
"""
import json
import shutil
import time

import numpy as np
import pytest
from scipy import stats

from rolem import cli
from rolem.corrstruct import CorrelationSpec, corr_matrix
from rolem.geweke import GewekeSetup, geweke_test
from rolem.grassmann import induced_logdensity, sample_uniform_projection
from rolem.inference import frobenius_error, hpd_entrywise, p_bic
from rolem.matvar import MatNormalParams, MatTParams, mn_logpdf, mt_logpdf
from rolem.sampler import PriorSpec, TuningSpec, run_chain
from rolem.simgen import SimDesign, generate, structured_a_matrix, structured_prior_design

from conftest import random_spd
from oracles import conditional_spreads
from test_matvar import mt_by_quadrature, vec_normal_logpdf


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_c01_geweke(report):
    t0 = time.perf_counter()
    res = geweke_test(GewekeSetup(r=3, p=2, u=1, n=5, J=2), n_forward=10_000, n_rounds=10_000, alpha=0.01, seed=0)
    wall = time.perf_counter() - t0
    worst = int(np.argmin(res.pvalues))
    ok = res.passed and wall < 600
    report(1, ok, f"{len(res.names)} summaries, min p = {res.pvalues[worst]:.2e} ({res.names[worst]}) "
                  f"vs Bonferroni {res.threshold:.2e}; {wall:.0f}s")
    assert ok, res.report()


def test_c02_conditional_oracles(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed, kw in [(0, {}), (1, {"corr_kind": "cs"}), (2, {"corr_kind": "uncor"}),
                     (3, {"error_model": "normal"}), (4, {"alpha_prior": True})]:
        worst = max(worst, max(conditional_spreads(seed, **kw).values()))
    wall = time.perf_counter() - t0
    ok = worst < 1e-8 and wall < 60
    report(2, ok, f"max |dlog| spread over all blocks = {worst:.1e} (< 1e-8); {wall:.1f}s")
    assert ok


def test_c03_proposal_symmetry(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(200):
        r = int(rng.integers(2, 8))
        u = int(rng.integers(1, r))
        s2 = (0.01, 1.0, 100.0)[k % 3]
        P1 = sample_uniform_projection(r, u, rng).matrix
        P2 = sample_uniform_projection(r, u, rng).matrix
        I = np.eye(r)
        worst = max(worst, abs(induced_logdensity(P1, s2 * I + P2) - induced_logdensity(P2, s2 * I + P1)))
    ok = worst < 1e-9
    report(3, ok, f"max asymmetry over 200 pairs = {worst:.1e} (< 1e-9)")
    assert ok


def test_c04_density_oracles(report):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    mn_worst = mt_worst = 0.0
    for _ in range(200):
        a, b = (int(v) for v in rng.integers(1, 5, size=2))
        m = rng.standard_normal((a, b))
        row, col = random_spd(rng, a), random_spd(rng, b)
        y = m + rng.standard_normal((a, b))
        mn_worst = max(mn_worst, abs(mn_logpdf(y, MatNormalParams(m, row, col)) - vec_normal_logpdf(y, m, row, col)))
        nu = float(rng.uniform(2.5, 30.0))
        mt_worst = max(mt_worst, abs(mt_logpdf(y, MatTParams(nu, m, row, col)) - mt_by_quadrature(y, m, row, col, nu)))
    wall = time.perf_counter() - t0
    ok = mn_worst < 1e-9 and mt_worst < 1e-6 and wall < 60
    report(4, ok, f"matrix normal max err {mn_worst:.1e} (< 1e-9), matrix t max err {mt_worst:.1e} (< 1e-6); {wall:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def robust_vs_normal():
    """20 replicates of the desk-scale design fitted with t and normal errors."""
    t0 = time.perf_counter()
    d = {"t": [], "normal": []}
    hits, total = 0, 0
    for rep in range(20):
        ds, truth = generate(SimDesign(r=5, p=6, u=3, n=100, J=5, seed=1000 + rep))
        for em in ("t", "normal"):
            ch = run_chain(ds, 3, "ar1", PriorSpec.default(5, 6, 3, error_model=em), TuningSpec(seed=rep))
            d[em].append(frobenius_error(ch.beta.mean(axis=0), truth.beta))
            if em == "t":
                lo, hi = hpd_entrywise(ch.beta, 0.95)
                covered = (lo <= truth.beta) & (truth.beta <= hi)
                hits += int(covered.sum())
                total += covered.size
    return np.array(d["t"]), np.array(d["normal"]), hits / total, time.perf_counter() - t0


def test_c05_robust_beats_normal(report, robust_vs_normal):
    rob, nor, _, wall = robust_vs_normal
    p = stats.ttest_rel(rob, nor, alternative="less").pvalue
    ok = rob.mean() <= nor.mean() and p < 0.05 and wall < 1800
    report(5, ok, f"mean D(beta) t-errors {rob.mean():.3f} vs normal {nor.mean():.3f}, "
                  f"paired one-sided p = {p:.1e} (< 0.05); {wall:.0f}s")
    assert ok


def test_c06_hpd_coverage(report, robust_vs_normal):
    _, _, cov, _ = robust_vs_normal
    ok = 0.90 <= cov <= 0.99
    report(6, ok, f"pooled 95% HPD coverage of beta = {cov:.3f} (in [0.90, 0.99])")
    assert ok


def test_c07_model_selection(report):
    cfg = dict(cli.FIT_DEFAULTS, burn_in=500, n_samples=1000, seed=0)
    t0 = time.perf_counter()
    picks = {"bic": [], "waic": []}
    for rep in range(20):
        ds, _ = generate(SimDesign(r=5, p=6, u=3, n=100, J=5, seed=2000 + rep))
        rows = cli.select_table(ds, [1, 2, 3, 4], ["uncor", "cs", "ar1"], cfg, "bic")
        ok_rows = [r for r in rows if r["status"] == "ok"]
        for crit in picks:
            best = min(ok_rows, key=lambda r: r[crit])
            picks[crit].append((best["u"], best["corr"]))
    wall = time.perf_counter() - t0
    frac = {c: (np.mean([u == 3 for u, _ in v]), np.mean([k == "ar1" for _, k in v])) for c, v in picks.items()}
    ok = all(fu >= 0.8 and fk >= 0.8 for fu, fk in frac.values()) and wall < 3600
    report(7, ok, "; ".join(f"{c.upper()} u=3 {fu:.2f}, AR(1) {fk:.2f}" for c, (fu, fk) in frac.items())
              + f" (each >= 0.80); {wall:.0f}s")
    assert ok


def test_c08_error_law_moments(report):
    t0 = time.perf_counter()
    worst = {}
    for kind in ("t4", "normal", "mixture"):
        ds, truth = generate(SimDesign(r=3, p=2, u=1, n=100_000, J=2, error_kind=kind, seed=8))
        e = np.array([(y - truth.alpha[:, None] - truth.beta @ x).ravel(order="F") for y, x in zip(ds.ys, ds.xs)])
        emp = e.T @ e / len(e)
        want = 2.0 * np.kron(corr_matrix(CorrelationSpec("ar1", 0.5), 2), truth.sigma_eps)
        # entrywise error relative to the entry's natural scale sqrt(C_ii C_jj)
        scale = np.sqrt(np.outer(np.diag(want), np.diag(want)))
        worst[kind] = float(np.max(np.abs(emp - want) / scale))
    wall = time.perf_counter() - t0
    ok = max(worst.values()) < 0.05 and wall < 120
    report(8, ok, ", ".join(f"{k} {v:.3f}" for k, v in worst.items()) + f" (each < 0.05); {wall:.0f}s")
    assert ok


def test_c09_structured_prior(report):
    r, p, u, n = 8, 6, 3, 30
    t0 = time.perf_counter()
    err = np.zeros((10, 4))
    for rep in range(10):
        ds, truth = generate(SimDesign(r=r, p=p, u=u, n=n, J=5, seed=500 + rep, fixed_A=structured_a_matrix(r)))
        for w in range(4):
            pr = PriorSpec.default(r, p, u)
            pr.m_prior = structured_prior_design(w + 1, r=r)
            ch = run_chain(ds, u, "ar1", pr, TuningSpec(seed=rep))
            err[rep, w] = frobenius_error(ch.beta.mean(axis=0), truth.beta)
    wall = time.perf_counter() - t0
    means = err.mean(axis=0)
    ok = bool(np.all(np.diff(means) <= 0)) and wall < 1200
    report(9, ok, "mean D(beta) M1..M4 = " + ", ".join(f"{m:.3f}" for m in means) + f" (non-increasing); {wall:.0f}s")
    assert ok


def test_c10_parameter_count(report):
    a, b = p_bic(20, 30, 3), p_bic(6, 6, 2)
    ok = a == 322 and b == 41
    report(10, ok, f"p_BIC(20,30,3) = {a} (322), p_BIC(6,6,2) = {b} (41)")
    assert ok


def _rerun_matches(cmd, out):
    """Move ``out`` aside, rerun from its manifest into the same place, compare bytes."""
    saved = out.with_name(out.name + "_first")
    shutil.copytree(out, saved)
    shutil.rmtree(out)
    assert cli.main([cmd, "--manifest", str(saved / "manifest.json")]) == 0
    bad = []
    for f in sorted(saved.iterdir()):
        a, b = f.read_bytes(), (out / f.name).read_bytes()
        if f.name == "manifest.json":
            # run time is the one field that cannot repeat
            a, b = json.loads(a), json.loads(b)
            a.pop("wall_time_s", None)
            b.pop("wall_time_s", None)
        if a != b:
            bad.append(f.name)
    return bad


def test_c11_reproducible_reruns(report, tmp_path):
    sim, fit, sel = tmp_path / "sim", tmp_path / "fit", tmp_path / "sel"
    score, summ = tmp_path / "score", tmp_path / "summ"
    fast = ["--burn-in", "50", "--n-samples", "60"]
    t0 = time.perf_counter()
    assert cli.main(["simulate", "--preset", "desk", "--n", "20", "--seed", "3", "--out", str(sim)]) == 0
    data = str(sim / "data.csv")
    assert cli.main(["fit", "--data", data, "--u", "3", "--chains", "2", "--out", str(fit)] + fast) == 0
    assert cli.main(["select", "--data", data, "--u-grid", "2,3", "--corr-grid", "cs,ar1", "--out", str(sel)] + fast) == 0
    assert cli.main(["score", "--fit", str(fit), "--truth", str(sim / "truth.json"), "--out", str(score)]) == 0
    assert cli.main(["summarize", "--fit", str(fit), "--out", str(summ)]) == 0
    bad = {}
    for cmd, out in (("simulate", sim), ("score", score), ("summarize", summ), ("fit", fit), ("select", sel)):
        diff = _rerun_matches(cmd, out)
        if diff:
            bad[cmd] = diff
    wall = time.perf_counter() - t0
    ok = not bad
    report(11, ok, ("all outputs of simulate, fit, select, score, summarize byte-identical on rerun"
                    if ok else f"differences: {bad}") + f"; {wall:.0f}s")
    assert ok
