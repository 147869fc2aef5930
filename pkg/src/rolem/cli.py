"""Command-line interface: ``rolem simulate | fit | select | score | summarize``.

Every command accepts ``--config FILE.json`` (flags given explicitly win) and
``--manifest FILE.json`` to repeat an earlier run with its recorded settings.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import __version__
from .corrstruct import KINDS, parse_kind
from .errors import DataError, FrameError, InvalidParameterError, NumericalError
from .inference import (
    autocorrelation,
    bayes_factor,
    effective_sample_size,
    frobenius_error,
    hpd_interval,
    rhat,
    score_chain,
)
from .io import fmt, read_dataset, read_table, standardize, write_dataset, write_json, write_table
from .model import parse_error_model
from .sampler import ChainOutput, PriorSpec, TuningSpec, run_chain
from .simgen import MIXTURE, GroundTruth, SimDesign, generate, structured_a_matrix

log = logging.getLogger("rolem")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

PRESETS = {
    "envelope-ar1": dict(r=20, p=30, u=3, n=100, J=5, rho_true=0.5, corr_kind="ar1", error_kind="t4"),
    "desk": dict(r=5, p=6, u=3, n=100, J=5, rho_true=0.5, corr_kind="ar1", error_kind="t4"),
    "structured": dict(r=20, p=30, u=3, n=100, J=5, rho_true=0.5, corr_kind="ar1", error_kind="t4",
                       structured=True),
}

FIT_DEFAULTS = dict(
    u=None, corr="ar1", error_model="t", burn_in=1000, n_samples=2000, thin=1, seed=0,
    delta_rho=0.1, delta_nu=2.0, sigma2_p=0.1, autotune=True, tune_every=100, frame="qr",
    prior_scale=1e-3, prior=None, standardize=False, strict=False, chains=1, level=0.95, max_lag=50,
)
SELECT_DEFAULTS = dict(FIT_DEFAULTS, u_grid=None, corr_grid=None, criterion="bic", workers=1)
SIM_BASE = dict(r=20, p=30, u=3, n=100, J=5, rho=0.5, corr="ar1", error_kind="t4", seed=0, structured=False)
SIM_DEFAULTS = dict({k: None for k in SIM_BASE}, preset=None)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ parsing
def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _bool(text):
    t = str(text).lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_common(sp):
    sp.add_argument("--config", help="JSON file with settings; explicit flags override it")
    sp.add_argument("--manifest", help="repeat a run recorded in this manifest")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("-v", "--verbose", action="store_true")


def _add_fit_args(sp):
    sp.add_argument("--data", help="long-format CSV")
    sp.add_argument("--corr", help=f"working correlation: {', '.join(KINDS)}")
    sp.add_argument("--error-model", dest="error_model", help="t (robust) or normal")
    sp.add_argument("--burn-in", dest="burn_in", type=int)
    sp.add_argument("--n-samples", dest="n_samples", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--delta-rho", dest="delta_rho", type=float)
    sp.add_argument("--delta-nu", dest="delta_nu", type=float)
    sp.add_argument("--sigma2-p", dest="sigma2_p", type=float)
    sp.add_argument("--autotune", type=_bool)
    sp.add_argument("--tune-every", dest="tune_every", type=int)
    sp.add_argument("--frame", help="qr, identity or refresh")
    sp.add_argument("--prior-scale", dest="prior_scale", type=float,
                    help="scale of the vague H, Psi, Psi0 and M defaults")
    sp.add_argument("--standardize", type=_bool, nargs="?", const=True)
    sp.add_argument("--strict", type=_bool, nargs="?", const=True,
                    help="drop whole subjects with any missing cell")
    sp.add_argument("--chains", type=int)
    sp.add_argument("--level", type=float, help="HPD level")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rolem", description="Robust Bayesian envelope models for longitudinal data")
    ap.add_argument("--version", action="version", version=f"rolem {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("simulate", help="generate a synthetic dataset and its ground truth")
    _add_common(sp)
    sp.add_argument("--preset", choices=sorted(PRESETS))
    for name in ("r", "p", "u", "n", "J", "seed"):
        sp.add_argument(f"--{name}", type=int)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--corr")
    sp.add_argument("--error-kind", dest="error_kind", help="t4, normal or mixture")
    sp.add_argument("--structured", type=_bool, nargs="?", const=True,
                    help="use the tiled fixed-A design")

    sp = sub.add_parser("fit", help="fit one model by MCMC")
    _add_common(sp)
    _add_fit_args(sp)
    sp.add_argument("--u", type=int, help="envelope dimension")

    sp = sub.add_parser("select", help="fit a grid of candidate models and rank them")
    _add_common(sp)
    _add_fit_args(sp)
    sp.add_argument("--u-grid", dest="u_grid", type=_int_list)
    sp.add_argument("--corr-grid", dest="corr_grid", type=_str_list)
    sp.add_argument("--criterion", choices=["bic", "waic"])
    sp.add_argument("--workers", type=int)

    sp = sub.add_parser("score", help="compare fitted draws with a ground-truth file")
    _add_common(sp)
    sp.add_argument("--fit", action="append", help="fit output directory (repeatable)")
    sp.add_argument("--truth", action="append", help="ground-truth JSON (repeatable, paired with --fit)")
    sp.add_argument("--level", type=float)

    sp = sub.add_parser("summarize", help="posterior summary table from a draws file")
    _add_common(sp)
    sp.add_argument("--fit", help="fit output directory or draws CSV")
    sp.add_argument("--level", type=float)
    sp.add_argument("--max-lag", dest="max_lag", type=int)
    return ap


def resolve_config(args, defaults: dict) -> dict:
    """defaults <- manifest config <- --config file <- explicit flags."""
    cfg = dict(defaults)
    if getattr(args, "manifest", None):
        man = json.loads(Path(args.manifest).read_text())
        if man.get("command") != args.command:
            raise UsageError(f"manifest records command {man.get('command')!r}, not {args.command!r}")
        cfg.update(man["config"])
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} not found")
        extra = json.loads(path.read_text())
        unknown = set(extra) - set(defaults) - {"out", "data", "fit", "truth"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(extra)
    for k, v in vars(args).items():
        if k in ("command", "config", "manifest", "verbose") or v is None:
            continue
        cfg[k] = v
    return cfg


# ------------------------------------------------------------------ helpers
def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _out_dir(cfg) -> Path:
    if not cfg.get("out"):
        raise UsageError("--out is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def derive_seed(seed: int, *key) -> int:
    """Deterministic child seed for a candidate or chain."""
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in key]]).generate_state(1)[0])


def _load_data(cfg):
    if not cfg.get("data"):
        raise UsageError("--data is required")
    ds = read_dataset(cfg["data"], strict=bool(cfg.get("strict")))
    scaling = None
    if cfg.get("standardize"):
        ds, scaling = standardize(ds)
    return ds, scaling


def _prior(cfg, r, p, u):
    pr = PriorSpec.default(r, p, u, scale=float(cfg["prior_scale"]), error_model=parse_error_model(cfg["error_model"]))
    if cfg.get("prior"):
        base = pr.to_dict()
        base.update(cfg["prior"])
        pr = PriorSpec.from_dict(base)
    return pr


def _tuning(cfg, seed):
    return TuningSpec(delta_rho=float(cfg["delta_rho"]), delta_nu=float(cfg["delta_nu"]),
                      sigma2_p=float(cfg["sigma2_p"]), burn_in=int(cfg["burn_in"]),
                      n_samples=int(cfg["n_samples"]), thin=int(cfg["thin"]), seed=int(seed),
                      autotune=bool(cfg["autotune"]), tune_every=int(cfg["tune_every"]))


def fit_model(dataset, u, corr, cfg, seed):
    """One chain with settings from ``cfg``; the RNG is seeded from ``seed`` only."""
    frame = cfg["frame"]
    if frame not in ("qr", "identity", "refresh"):
        raise UsageError(f"unknown frame {frame!r}")
    prior = _prior(cfg, dataset.r, dataset.p, u)
    tuning = _tuning(cfg, seed)
    return run_chain(dataset, u, corr, prior, tuning, frame, np.random.default_rng(seed))


def concat_chains(chains):
    if len(chains) == 1:
        return chains[0]
    first = chains[0]
    arrays = {}
    for name in ("alpha", "eta", "a_coord", "gamma", "gamma0", "omega", "omega0", "beta", "sigma_eps",
                 "rho", "nu", "tau", "loglik", "pointwise"):
        arrays[name] = np.concatenate([getattr(c, name) for c in chains])
    acc = {b: tuple(int(sum(c.accept[b][i] for c in chains)) for i in range(2)) for b in first.accept}
    accb = {b: tuple(int(sum(c.accept_burnin[b][i] for c in chains)) for i in range(2)) for b in first.accept_burnin}
    return ChainOutput(**arrays, accept=acc, accept_burnin=accb, frame=first.frame, u=first.u,
                       corr_kind=first.corr_kind, error_model=first.error_model, tuning=first.tuning,
                       frame_failures=sum(c.frame_failures for c in chains),
                       wall_time=sum(c.wall_time for c in chains))


def _chain_seed(cfg, c):
    return int(cfg["seed"]) if int(cfg["chains"]) == 1 else derive_seed(cfg["seed"], c)


# ------------------------------------------------------------------ writers
def write_draws(path, chains):
    cols = None
    rows = []
    for c, ch in enumerate(chains):
        d = ch.scalar_draws()
        cols = list(d)
        mat = np.column_stack([d[k] for k in cols] + [ch.loglik])
        for s in range(mat.shape[0]):
            rows.append([c + 1, s + 1] + list(mat[s]))
    write_table(path, ["chain", "draw"] + cols + ["loglik"], rows)


def write_pointwise(path, chain):
    n = chain.pointwise.shape[1]
    rows = [[s + 1] + list(chain.pointwise[s]) for s in range(chain.n_draws)]
    write_table(path, ["draw"] + [f"subject_{i + 1}" for i in range(n)], rows)


def write_summary(path, draws: dict, level, ess_override=None):
    rows = []
    for name, x in draws.items():
        param, _, idx = name.partition("[")
        lo, hi = hpd_interval(x, level)
        ess = effective_sample_size(x) if ess_override is None else ess_override[name]
        rows.append([param, idx.rstrip("]"), float(np.mean(x)), lo, hi, ess])
    write_table(path, ["parameter", "index", "mean", "hpd_lower", "hpd_upper", "ess"], rows)


def write_diagnostics(path, chains, pooled, max_lag):
    rows = [["acceptance", b, "", v] for b, v in pooled.acceptance_rates().items()]
    rows.append(["frame_failures", "P", "", pooled.frame_failures])
    per = [c.scalar_draws() for c in chains]
    for name, x in pooled.scalar_draws().items():
        rows.append(["ess", name, "", effective_sample_size(x)])
        if len(chains) > 1:
            rows.append(["rhat", name, "", rhat(np.vstack([d[name] for d in per]))])
        for lag, v in enumerate(autocorrelation(per[0][name], max_lag)[1:], start=1):
            rows.append(["autocorr", name, lag, v])
    write_table(path, ["metric", "parameter", "lag", "value"], rows)


def _read_draws(path):
    header, rows = read_table(path)
    arr = np.array(rows, dtype=float)
    return {h: arr[:, k] for k, h in enumerate(header)}


def _matrix_from_draws(draws, name):
    keys = [k for k in draws if k.startswith(name + "[")]
    if not keys:
        raise DataError(f"draws file has no {name} columns")
    idx = [tuple(int(v) for v in k[len(name) + 1:-1].split(",")) for k in keys]
    shape = tuple(max(i[d] for i in idx) for d in range(len(idx[0])))
    n = draws[keys[0]].size
    out = np.empty((n,) + shape)
    for k, i in zip(keys, idx):
        out[(slice(None),) + tuple(v - 1 for v in i)] = draws[k]
    return out


# ----------------------------------------------------------------- commands
def cmd_simulate(cfg) -> dict:
    out = _out_dir(cfg)
    params = dict(SIM_BASE)
    if cfg.get("preset"):
        preset = dict(PRESETS[cfg["preset"]])
        preset["rho"] = preset.pop("rho_true")
        preset["corr"] = preset.pop("corr_kind")
        params.update(preset)
    params.update({k: v for k, v in cfg.items() if k in SIM_BASE and v is not None})
    fixed_a = structured_a_matrix(params["r"]) if params["structured"] else None
    design = SimDesign(r=params["r"], p=params["p"], u=params["u"], n=params["n"], J=params["J"],
                       rho_true=params["rho"], corr_kind=params["corr"], error_kind=params["error_kind"],
                       seed=params["seed"], fixed_A=fixed_a)
    dataset, truth = generate(design)
    write_dataset(dataset, out / "data.csv")
    (out / "truth.json").write_text(truth.to_json() + "\n")
    manifest = {
        "command": "simulate",
        "version": __version__,
        "config": {**{k: cfg.get(k) for k in SIM_DEFAULTS}, "out": str(out)},
        "design": design.to_dict(),
        "seed": design.seed,
        "outputs": {"data.csv": _sha256(out / "data.csv"), "truth.json": _sha256(out / "truth.json")},
    }
    if design.error_kind == "mixture":
        manifest["mixture"] = {"weights": MIXTURE["weights"], "variances": MIXTURE["variances"]}
    write_json(out / "manifest.json", manifest)
    return manifest


def cmd_fit(cfg) -> dict:
    out = _out_dir(cfg)
    if cfg.get("u") is None:
        raise UsageError("--u is required")
    dataset, scaling = _load_data(cfg)
    u = int(cfg["u"])
    corr = parse_kind(cfg["corr"])
    error_model = parse_error_model(cfg["error_model"])
    if not 1 <= u < dataset.r:
        raise UsageError(f"u must satisfy 1 <= u <= r - 1 = {dataset.r - 1}")
    if int(cfg["chains"]) < 1:
        raise UsageError("--chains must be >= 1")
    t0 = time.perf_counter()
    chains = [fit_model(dataset, u, corr, cfg, _chain_seed(cfg, c)) for c in range(int(cfg["chains"]))]
    pooled = concat_chains(chains)
    wall = time.perf_counter() - t0
    write_draws(out / "draws.csv", chains)
    write_pointwise(out / "pointwise.csv", pooled)
    write_summary(out / "summary.csv", pooled.scalar_draws(), float(cfg["level"]))
    write_diagnostics(out / "diagnostics.csv", chains, pooled, int(cfg["max_lag"]))
    score = score_chain(pooled)
    write_table(out / "scores.csv", list(score.to_dict()), [list(score.to_dict().values())])
    outputs = {f: _sha256(out / f) for f in ("draws.csv", "pointwise.csv", "summary.csv", "diagnostics.csv",
                                             "scores.csv")}
    manifest = {
        "command": "fit",
        "version": __version__,
        "config": {**{k: cfg.get(k) for k in FIT_DEFAULTS}, "data": str(cfg["data"]), "out": str(out)},
        "mode": "RoLEM" if error_model == "t" else "LEM",
        "error_model": error_model,
        "seed": int(cfg["seed"]),
        "chain_seeds": [_chain_seed(cfg, c) for c in range(int(cfg["chains"]))],
        "input_sha256": _sha256(cfg["data"]),
        "dims": {"n": dataset.n, "r": dataset.r, "p": dataset.p, "u": u, "J": list(dataset.J)},
        "frame": [c.frame.tolist() for c in chains],
        "acceptance": pooled.acceptance_rates(),
        "acceptance_burnin": {b: (a / t if t else None) for b, (a, t) in pooled.accept_burnin.items()},
        "final_tuning": [c.tuning.to_dict() for c in chains],
        "frame_failures": pooled.frame_failures,
        "standardization": scaling,
        "scores": score.to_dict(),
        "outputs": outputs,
        "wall_time_s": wall,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def _select_one(job):
    dataset, u, corr, cfg, seed = job
    try:
        chain = fit_model(dataset, u, corr, cfg, seed)
        s = score_chain(chain)
        return dict(u=u, corr=corr, bic=s.bic, waic=s.waic, p_bic=s.p_bic, p_waic=s.p_waic, status="ok")
    except (NumericalError, FrameError, np.linalg.LinAlgError) as exc:
        return dict(u=u, corr=corr, bic=math.nan, waic=math.nan, p_bic=math.nan, p_waic=math.nan,
                    status=f"failed: {exc}".replace("\n", " ")[:200])


def select_table(dataset, u_grid, corr_grid, cfg, criterion="bic", workers=1):
    """Fit every candidate and return table rows sorted by the criterion.

    Candidate seeds are derived from the master seed and the candidate's
    position in the grid, so results do not depend on the worker count.
    """
    jobs = []
    for i, u in enumerate(u_grid):
        for j, corr in enumerate(corr_grid):
            jobs.append((dataset, int(u), corr, cfg, derive_seed(cfg["seed"], u, KINDS.index(corr))))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_select_one, jobs))
    else:
        rows = [_select_one(j) for j in jobs]
    ok = [r for r in rows if r["status"] == "ok"]
    best = min(r["bic"] for r in ok) if ok else math.nan
    for r in rows:
        r["bayes_factor"] = bayes_factor(r["bic"], best) if r["status"] == "ok" else math.nan
    key = criterion
    rows.sort(key=lambda r: (r["status"] != "ok", r[key] if r["status"] == "ok" else 0.0, r["u"],
                             KINDS.index(r["corr"])))
    return rows


def cmd_select(cfg) -> dict:
    out = _out_dir(cfg)
    dataset, scaling = _load_data(cfg)
    u_grid = cfg.get("u_grid") or ([int(cfg["u"])] if cfg.get("u") else None)
    if not u_grid:
        raise UsageError("--u-grid is required")
    bad = [u for u in u_grid if not 1 <= int(u) < dataset.r]
    if bad:
        raise UsageError(f"u-grid values {bad} outside 1..{dataset.r - 1}")
    corr_grid = [parse_kind(c) for c in (cfg.get("corr_grid") or [cfg["corr"]])]
    criterion = cfg["criterion"]
    if criterion not in ("bic", "waic"):
        raise UsageError("criterion must be bic or waic")
    rows = select_table(dataset, u_grid, corr_grid, cfg, criterion, int(cfg["workers"]))
    cols = ["u", "corr", "bic", "waic", "p_bic", "p_waic", "bayes_factor", "status"]
    write_table(out / "select.csv", cols, [[r[c] for c in cols] for r in rows])
    manifest = {
        "command": "select",
        "version": __version__,
        "config": {**{k: cfg.get(k) for k in SELECT_DEFAULTS}, "data": str(cfg["data"]), "out": str(out)},
        "input_sha256": _sha256(cfg["data"]),
        "standardization": scaling,
        "best": {"u": rows[0]["u"], "corr": rows[0]["corr"]} if rows and rows[0]["status"] == "ok" else None,
        "outputs": {"select.csv": _sha256(out / "select.csv")},
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def score_fit(draws: dict, truth: GroundTruth, level=0.95):
    beta = _matrix_from_draws(draws, "beta")
    sigma = _matrix_from_draws(draws, "sigma_eps")
    if beta.shape[1:] != truth.beta.shape or sigma.shape[1:] != truth.sigma_eps.shape:
        raise DataError(f"dimension mismatch: fitted beta {beta.shape[1:]} vs truth {truth.beta.shape}")
    metrics = {"D_beta": frobenius_error(beta.mean(axis=0), truth.beta),
               "D_sigma": frobenius_error(sigma.mean(axis=0), truth.sigma_eps)}
    entries = []
    for i, j in np.ndindex(*truth.beta.shape):
        lo, hi = hpd_interval(beta[:, i, j], level)
        t = truth.beta[i, j]
        entries.append([f"{i + 1},{j + 1}", t, float(beta[:, i, j].mean()), lo, hi, hi - lo, int(lo <= t <= hi)])
    metrics["coverage"] = float(np.mean([e[-1] for e in entries]))
    metrics["mean_hpd_length"] = float(np.mean([e[5] for e in entries]))
    return metrics, entries


def cmd_score(cfg) -> dict:
    out = _out_dir(cfg)
    fits, truths = cfg.get("fit") or [], cfg.get("truth") or []
    if isinstance(fits, str):
        fits = [fits]
    if isinstance(truths, str):
        truths = [truths]
    if not fits or len(fits) != len(truths):
        raise UsageError("give matching numbers of --fit and --truth")
    level = float(cfg.get("level") or 0.95)
    per_rep, hits, total = [], 0, 0
    entry_rows = []
    for k, (f, t) in enumerate(zip(fits, truths), start=1):
        path = Path(f)
        draws = _read_draws(path / "draws.csv" if path.is_dir() else path)
        truth = GroundTruth.from_json(Path(t).read_text())
        metrics, entries = score_fit(draws, truth, level)
        per_rep.append([k, metrics["D_beta"], metrics["D_sigma"], metrics["coverage"], metrics["mean_hpd_length"]])
        entry_rows += [[k] + e for e in entries]
        hits += sum(e[-1] for e in entries)
        total += len(entries)
    write_table(out / "score.csv", ["replicate", "D_beta", "D_sigma", "coverage", "mean_hpd_length"], per_rep)
    write_table(out / "score_beta.csv",
                ["replicate", "index", "truth", "mean", "hpd_lower", "hpd_upper", "hpd_length", "covered"], entry_rows)
    ci = sps.binomtest(hits, total).proportion_ci(confidence_level=0.95, method="exact")
    arr = np.array(per_rep, dtype=float)
    agg = [["replicates", len(per_rep)], ["mean_D_beta", arr[:, 1].mean()], ["mean_D_sigma", arr[:, 2].mean()],
           ["coverage", hits / total], ["coverage_ci_lower", ci.low], ["coverage_ci_upper", ci.high],
           ["mean_hpd_length", arr[:, 4].mean()]]
    write_table(out / "aggregate.csv", ["metric", "value"], agg)
    manifest = {
        "command": "score",
        "version": __version__,
        "config": {"fit": [str(f) for f in fits], "truth": [str(t) for t in truths], "level": level,
                   "out": str(out)},
        "outputs": {f: _sha256(out / f) for f in ("score.csv", "score_beta.csv", "aggregate.csv")},
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def cmd_summarize(cfg) -> dict:
    if not cfg.get("fit"):
        raise UsageError("--fit is required")
    path = Path(cfg["fit"])
    draws = _read_draws(path / "draws.csv" if path.is_dir() else path)
    names = [k for k in draws if k not in ("chain", "draw", "loglik")]
    level = float(cfg.get("level") or 0.95)
    if cfg.get("out"):
        out = _out_dir(cfg)
        write_summary(out / "summary.csv", {k: draws[k] for k in names}, level)
        manifest = {"command": "summarize", "version": __version__,
                    "config": {"fit": str(path), "level": level, "out": str(out)},
                    "outputs": {"summary.csv": _sha256(out / "summary.csv")}}
        write_json(out / "manifest.json", manifest)
        return manifest
    print("parameter,index,mean,hpd_lower,hpd_upper,ess")
    for k in names:
        param, _, idx = k.partition("[")
        lo, hi = hpd_interval(draws[k], level)
        print(",".join([param, idx.rstrip("]")] + [fmt(v) for v in
                                                   (draws[k].mean(), lo, hi, effective_sample_size(draws[k]))]))
    return {}


COMMANDS = {
    "simulate": (cmd_simulate, SIM_DEFAULTS),
    "fit": (cmd_fit, FIT_DEFAULTS),
    "select": (cmd_select, SELECT_DEFAULTS),
    "score": (cmd_score, {"fit": None, "truth": None, "level": 0.95}),
    "summarize": (cmd_summarize, {"fit": None, "level": 0.95, "max_lag": 50}),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func, defaults = COMMANDS[args.command]
    try:
        cfg = resolve_config(args, defaults)
        func(cfg)
    except (UsageError, InvalidParameterError) as exc:
        print(f"rolem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"rolem: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FrameError, np.linalg.LinAlgError) as exc:
        print(f"rolem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
