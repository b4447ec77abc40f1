"""Command-line front end: validate / analyze / sweep / simulate / yaglom.

Every command reads one JSON config, writes CSV/JSON under --out, and is
deterministic for a fixed (config, seed) whatever the worker count.  Exit
codes: 0 success, 1 domain failure, 2 config/schema error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import model as model_mod
from . import qsd as qsd_mod
from . import simulate as sim_mod
from . import spectral as spec_mod
from .errors import InsufficientSurvivors, NoSignChange, TimeTooLarge, TruncationFailure

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family", "params"],
    "properties": {
        "family": {"enum": ["logistic", "power_death"]},
        "params": {"type": "object"},
        "K": {"type": "number", "exclusiveMinimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["K_list"],
            "properties": {
                "K_list": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "number", "exclusiveMinimum": 1},
                },
                "oracle_max_K": {"type": "number", "exclusiveMinimum": 1},
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "replicas": {"type": "integer", "minimum": 1},
                "n0": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "qsd"}]},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "checkpoints": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0},
                },
            },
        },
        "yaglom": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n0_list": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "nstar"}]},
                },
                "t_grid": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
    },
}

_PARAM_KEYS = {"logistic": {"lam", "mu"}, "power_death": {"a", "b", "cc", "p"}}


class ConfigError(Exception):
    pass


def _load_config(path: str, need_K=True):
    raw = Path(path).read_bytes()
    sha = hashlib.sha1(b"blob %d\0" % len(raw) + raw).hexdigest()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc
    want = _PARAM_KEYS[doc["family"]]
    got = set(doc["params"])
    if got != want:
        raise ConfigError(f"params for {doc['family']} must be exactly {sorted(want)}, got {sorted(got)}")
    for k, v in doc["params"].items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(f"params.{k} must be a number")
    if need_K and "K" not in doc:
        raise ConfigError("config needs a carrying capacity K")
    return doc, sha


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _provenance(doc, sha, seed):
    return {"config": doc, "input_sha1": sha, "seed": seed}


def _pipeline(doc, oracle=False):
    """model -> landmarks -> table -> spectral -> qsd, shared by the commands."""
    try:
        model = model_mod.RateModel.from_json(doc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    landmarks = model_mod.compute_landmarks(model)
    table = model_mod.build_table(model, landmarks)
    sol = spec_mod.analyze_spectrum(model, landmarks, table, oracle=oracle)
    q = qsd_mod.analyze_qsd(sol, table, landmarks)
    return model, landmarks, table, sol, q


def _landmarks_dict(lm):
    return {
        "x_star": lm.x_star,
        "x_2star": lm.x_2star,
        "x_3star": lm.x_3star,
        "theta": lm.theta,
        "n_star": lm.n_star,
        "n_2star": lm.n_2star,
        "n_3star": lm.n_3star,
        "h_second": lm.h_second,
        "sigma": lm.sigma,
        "c": lm.c,
        "a_rate": lm.a_rate,
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args):
    doc, sha = _load_config(args.config)
    model = model_mod.RateModel.from_json(doc, check=False)
    report = model_mod.validate_assumptions(model, grid_points=1000)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = dict(_provenance(doc, sha, args.seed), command="validate", report=report.as_dict())
    _write_json(out / "report.json", payload)
    return 0 if report.all_passed else 1


def _analysis_payload(model, landmarks, table, sol, q):
    d = {
        "K": model.K,
        "N": table.N,
        "n_star": table.n_star,
        "rho0": sol.rho0,
        "log_rho0": sol.log_rho0,
        "rho0_asymptotic": sol.rho0_asymptotic,
        "log_rho0_asymptotic": sol.log_rho0_asymptotic,
        "rho1": sol.rho1,
        "oracle_rho0": sol.oracle_rho0,
        "oracle_rho0_rel_diff": (
            abs(sol.rho0 / sol.oracle_rho0 - 1.0) if sol.oracle_rho0 else None
        ),
        "gap_lb": sol.gap_lb,
        "residual": sol.residual,
        "D_K": sol.D_K,
        "eta_K": sol.eta_K,
        "tv_gauss": q.tv_gauss,
        "Z_K": q.Z_K,
        "Z_K_formula": q.Z_K_formula,
        "qsd_mean": q.mean,
        "qsd_variance": q.variance,
        "t0_spectral": q.t0_spectral,
        "t0_summed": q.t0_summed,
        "t0_linear": q.t0_linear,
        "landmarks": _landmarks_dict(landmarks),
        # the per-state hitting-time formula in use; the linear-solve oracle
        # arbitrates, see t0_summed vs t0_linear
        "hitting_time_formula": "sum_{m<=n} (1/(mu_m pi_m)) sum_{i>=m} pi_i",
    }
    return d


def cmd_analyze(args):
    doc, sha = _load_config(args.config)
    try:
        model, landmarks, table, sol, q = _pipeline(doc, oracle=args.oracle)
    except (NoSignChange, TruncationFailure) as exc:
        print(f"analyze failed: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = dict(
        _provenance(doc, sha, args.seed),
        command="analyze",
        analysis=_analysis_payload(model, landmarks, table, sol, q),
    )
    _write_json(out / "analysis.json", payload)
    n = np.arange(1, table.N + 1)
    pi = np.exp(table.log_pi[1:])
    rows = zip(
        n,
        pi,
        table.u0[1:],
        sol.phi[1:],
        sol.V[1:],
        q.nu[1:],
        q.gaussian[1:],
        q.alpha[1:],
    )
    _write_csv(out / "qsd.csv", ["n", "pi", "u0", "phi", "V", "nu", "gaussian", "alpha"], rows)
    return 0


_SWEEP_COLS = [
    "K", "status", "error", "N", "n_star",
    "rho0", "log_rho0", "rho0_asymptotic", "log_rho0_asymptotic", "rho0_over_asymptotic",
    "rho1", "gap_lb", "gap_lb_times_logK",
    "tv_gauss", "tv_gauss_times_sqrtK", "residual",
    "t0_spectral", "t0_summed", "t0_linear", "D_K", "eta_K",
    "u0_nstar_minus_limit_times_K", "log_pi_sum_centered",
]


def _sweep_row(job):
    doc, K, oracle = job
    doc = dict(doc, K=K)
    try:
        model, landmarks, table, sol, q = _pipeline(doc, oracle=oracle)
    except Exception as exc:  # per-K failures recorded, sweep continues
        return {"K": K, "status": "error", "error": str(exc)}
    lam1 = float(model.lam_tilde(1.0 / K))
    mu1 = float(model.mu_tilde(1.0 / K))
    u0_limit = 1.0 / (1.0 - mu1 / lam1)
    return {
        "K": K,
        "status": "ok",
        "error": "",
        "N": table.N,
        "n_star": table.n_star,
        "rho0": sol.rho0,
        "log_rho0": sol.log_rho0,
        "rho0_asymptotic": sol.rho0_asymptotic,
        "log_rho0_asymptotic": sol.log_rho0_asymptotic,
        "rho0_over_asymptotic": math.exp(sol.log_rho0 - sol.log_rho0_asymptotic),
        "rho1": sol.rho1,
        "gap_lb": sol.gap_lb,
        "gap_lb_times_logK": sol.gap_lb * math.log(K),
        "tv_gauss": q.tv_gauss,
        "tv_gauss_times_sqrtK": q.tv_gauss * math.sqrt(K),
        "residual": sol.residual,
        "t0_spectral": q.t0_spectral,
        "t0_summed": q.t0_summed,
        "t0_linear": q.t0_linear,
        "D_K": sol.D_K,
        "eta_K": sol.eta_K,
        "u0_nstar_minus_limit_times_K": (table.u0[table.n_star] - u0_limit) * K,
        "log_pi_sum_centered": table.log_pi_sum - (landmarks.c * K + 0.5 * math.log(K)),
    }


def cmd_sweep(args):
    doc, sha = _load_config(args.config, need_K=False)
    if "sweep" not in doc:
        raise ConfigError("sweep command needs a 'sweep' section with K_list")
    K_list = doc["sweep"]["K_list"]
    oracle_max = doc["sweep"].get("oracle_max_K", 60.0)
    jobs = [(doc, K, bool(args.oracle and K <= oracle_max)) for K in K_list]
    if args.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "sweep.csv",
        _SWEEP_COLS,
        [[row.get(c) for c in _SWEEP_COLS] for row in rows],
    )
    return 0


def cmd_simulate(args):
    doc, sha = _load_config(args.config)
    opts = doc.get("simulate", {})
    model, landmarks, table, sol, q = _pipeline(doc)
    rho_scale = sol.rho0_asymptotic if sol.rho0_asymptotic > 0.0 else sol.rho0
    t_max = float(opts.get("t_max", 20.0 / rho_scale))
    if "checkpoints" in opts:
        checkpoints = tuple(float(t) for t in opts["checkpoints"])
    else:
        horizon = min(t_max, 1.5 / sol.rho0)
        checkpoints = tuple(np.linspace(0.0, horizon, 33)[1:])
    cfg = sim_mod.SimConfig(
        model=model,
        n0=opts.get("n0", "qsd"),
        replicas=int(opts.get("replicas", 2000)),
        t_max=t_max,
        checkpoints=checkpoints,
        master_seed=args.seed,
    )
    est = sim_mod.run_ssa(cfg, qsd=q.nu, gap_lb=sol.gap_lb, workers=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    any_tv = False
    for ci, t in enumerate(est.checkpoints):
        try:
            tv, lo, hi = sim_mod.conditioned_tv(est, float(t), q.nu)
            any_tv = True
        except InsufficientSurvivors:
            tv = lo = hi = None
        rows.append(
            [t, est.survival_frac[ci], est.survival_se[ci], est.survivors(ci), tv, lo, hi]
        )
    _write_csv(
        out / "sim.csv",
        ["checkpoint", "frac_alive", "se", "survivors", "tv_to_nu", "tv_lo", "tv_hi"],
        rows,
    )
    uncensored = est.extinction_times[~est.censored]
    mean_ext = float(uncensored.mean()) if uncensored.size else math.nan
    se_ext = (
        float(uncensored.std(ddof=1) / math.sqrt(uncensored.size)) if uncensored.size > 1 else math.nan
    )
    ks_stat, ks_p = (
        sim_mod.ks_exponential(uncensored, sol.rho0) if uncensored.size else (math.nan, math.nan)
    )
    payload = dict(
        _provenance(doc, sha, args.seed),
        command="simulate",
        simulate={
            "backend": est.backend,
            "replicas": cfg.replicas,
            "n0": cfg.n0,
            "t_max": cfg.t_max,
            "censored": int(est.censored.sum()),
            "mean_extinction_time": mean_ext,
            "se_extinction_time": se_ext,
            "t0_spectral": q.t0_spectral,
            "rho0": sol.rho0,
            "rho0_hat": est.rho0_hat,
            "rho0_ci": list(est.rho0_ci),
            "fit_window": list(est.fit_window),
            "ks_statistic": ks_stat,
            "ks_pvalue": ks_p,
        },
    )
    _write_json(out / "sim.json", payload)
    return 0 if any_tv else 1


def cmd_yaglom(args):
    doc, sha = _load_config(args.config)
    opts = doc.get("yaglom", {})
    model, landmarks, table, sol, q = _pipeline(doc)
    n0_list = [
        landmarks.n_star if n0 == "nstar" else int(n0) for n0 in opts.get("n0_list", [1, "nstar"])
    ]
    if "t_grid" in opts:
        t_grid = [float(t) for t in opts["t_grid"]]
    else:
        t_grid = [0.0]
        t = 0.5
        cap = min(1.2 / sol.rho0, 500.0)
        while t <= cap:
            t_grid.append(t)
            t *= 1.5
    rows = []
    for n0 in n0_list:
        alpha = float(q.alpha[n0])
        mixture = np.concatenate([[1.0 - alpha], alpha * q.nu[1:]])
        v0 = np.zeros(table.N + 1)
        v0[n0] = 1.0
        try:
            laws = qsd_mod.transient_law_at_times(table, v0, t_grid)
        except TimeTooLarge:
            laws = None
        if laws is None:
            rows.append([t_grid[0], n0, None, None, None, "time_too_large"])
            continue
        for t, law in zip(t_grid, laws):
            surv = 1.0 - law[0]
            cond = law[1:] / surv if surv > 0 else np.zeros(table.N)
            rows.append(
                [
                    t,
                    n0,
                    qsd_mod.tv_distance(cond, q.nu[1:]),
                    qsd_mod.tv_distance(law, mixture),
                    surv,
                    "",
                ]
            )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "yaglom.csv",
        ["t", "n0", "tv_to_nu", "tv_to_mixture", "survival", "flag"],
        rows,
    )
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="qsdlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in [
        ("validate", cmd_validate),
        ("analyze", cmd_analyze),
        ("sweep", cmd_sweep),
        ("simulate", cmd_simulate),
        ("yaglom", cmd_yaglom),
    ]:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="path to the JSON model/run config")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        sp.add_argument("--oracle", action="store_true", help="run the eigensolver cross-check")
        sp.add_argument("--threads", type=int, default=1, help="worker count for parallel parts")
        sp.set_defaults(fn=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        doc, _ = _load_config(args.config, need_K=False)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is None:
        args.seed = int(doc.get("seed", 0))
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
