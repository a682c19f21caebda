"""Experiment runner: config parsing, task scheduling, checkpointing and
artifact emission.

A run is a list of pure tasks, each drawing from its own (seed, stream)
pair, merged in task order.  Checkpoints record completed task results
with a checksum; resuming re-runs only the remainder, and single-worker
reruns are byte-identical.

Exit codes: 0 pass, 2 statistical-test failure, 1 error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .decoupling import (ConstantsConfig, MonotoneEvent, Observable,
                         decoupling_experiment)
from .errors import (CheckpointVersionMismatch, ConfigError,
                     CorruptCheckpoint, GradFieldError)
from .lattice import Region, ball
from .percolation import (ProperEmbedding, gaussian_handle, h_plus_scan,
                          proper_embeddings, renorm_step_check)
from .potentials import BoundaryCondition, from_config as potential_from_config
from .presets import EXPERIMENT_KINDS, graph_preset, list_presets
from .report import (config_hash, figure_bars, figure_heatmap, figure_hist,
                     figure_series, write_csv, write_json)
from .sampler import gaussian_exact_sample, sample_gibbs

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# config

def _vertex(text: str) -> tuple[int, ...]:
    return tuple(int(c) for c in text.split())


def _floats(text: str) -> list[float]:
    return [float(c) for c in text.split()]


def _ints(text: str) -> list[int]:
    return [int(c) for c in text.split()]


class Config:
    """Validated view of an INI experiment config."""

    def __init__(self, text: str):
        self.text = text
        self.hash = config_hash(text)
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config does not parse: {exc}") from exc
        self.parser = parser
        if "experiment" not in parser:
            raise ConfigError("missing [experiment] section")
        exp = parser["experiment"]
        self.kind = exp.get("kind", "").strip()
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"experiment.kind must be one of "
                              f"{EXPERIMENT_KINDS}, got {self.kind!r}")
        if "seed" not in exp:
            raise ConfigError("experiment.seed is required; no implicit entropy")
        try:
            self.seed = int(exp["seed"])
        except ValueError as exc:
            raise ConfigError("experiment.seed must be an integer") from exc
        self.output = exp.get("output", f"artifacts-{self.kind}-{self.seed}")
        self.workers = int(os.environ.get(
            "GGL_WORKERS", exp.get("workers", "1")))
        geo = parser["geometry"] if "geometry" in parser else {}
        self.d = int(geo.get("d", "3"))
        gamma = geo.get("gamma", "nn")
        try:
            self.graph = graph_preset(gamma, self.d)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        self.geo = geo
        pot = parser["potential"] if "potential" in parser else {}
        kind = pot.get("kind", "quadratic")
        beta = float(pot.get("beta", "1.0"))
        params = {}
        if "stiffness" in pot:
            params["stiffness"] = float(pot["stiffness"])
        try:
            self.potential = potential_from_config(kind, beta=beta, **params)
        except GradFieldError as exc:
            raise ConfigError(str(exc)) from exc
        self.mc = parser["mc"] if "mc" in parser else {}
        const_kwargs = {}
        if "constants" in parser:
            for key, val in parser["constants"].items():
                const_kwargs[key] = float(val)
        try:
            self.constants = ConstantsConfig(**const_kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad constants: {exc}") from exc

    def geo_int(self, key: str, default: int) -> int:
        return int(self.geo.get(key, str(default)))

    def mc_int(self, key: str, default: int) -> int:
        return int(self.mc.get(key, str(default)))


def load_config(path: str) -> Config:
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    with open(path) as fh:
        return Config(fh.read())


# ---------------------------------------------------------------------------
# experiment construction: each kind yields ordered (task_id, fn) pairs and
# a finalize(results) -> (pass, files) step

def _build_tasks(cfg: Config):
    builder = {
        "green": _exp_green,
        "capacity": _exp_capacity,
        "sample": _exp_sample,
        "cross_section": _exp_cross_section,
        "decouple": _exp_decouple,
        "percolate": _exp_percolate,
        "renorm": _exp_renorm,
        "even_reduce": _exp_even_reduce,
    }[cfg.kind]
    return builder(cfg)


def _exp_green(cfg: Config):
    from .srw import GreenOperator, Infinite, green
    x = _vertex(cfg.geo.get("x", " ".join(["0"] * cfg.d)))
    y = _vertex(cfg.geo.get("y", " ".join(["1"] + ["0"] * (cfg.d - 1))))
    infinite = cfg.geo.get("infinite", "false").lower() == "true"
    radius = cfg.geo_int("radius", 4)
    tol = float(cfg.geo.get("tol", "1e-3"))

    def task():
        if infinite:
            val = green(cfg.graph, Infinite(tol), x, y)
            series = []
        else:
            dom = ball(cfg.graph, x, radius, metric="ellinf")
            op = GreenOperator(cfg.graph, dom)
            val = op.value(x, y)
            series = []
            for k in range(0, radius + 1):
                t = (x[0] + k,) + x[1:]
                if t in dom:
                    series.append((k, op.value(x, t)))
        return {"x": list(x), "y": list(y), "value": val,
                "series": series, "pass": True}

    def finalize(results, outdir):
        r = results["green"]
        rows = [[" ".join(map(str, r["x"])), " ".join(map(str, r["y"])),
                 r["value"]]]
        write_csv(os.path.join(outdir, "results.csv"), ["x", "y", "value"],
                  rows, comments={"config_hash": cfg.hash})
        figs = []
        if r["series"]:
            ks, vs = zip(*r["series"])
            figs.append(figure_series(outdir, "green_decay.png", ks, vs,
                                      "distance along first axis", "g(x, y)",
                                      "Killed Green function decay"))
        return True, figs

    return [("green", task)], finalize


def _exp_capacity(cfg: Config):
    from .srw import energy, equilibrium_and_capacity
    u_radius = cfg.geo_int("u_radius", 1)
    radius = cfg.geo_int("radius", 10)
    zero = (0,) * cfg.d

    def task():
        U = ball(cfg.graph, zero, u_radius, metric="ell1")
        dom = ball(cfg.graph, zero, radius, metric="ellinf")
        e, cap = equilibrium_and_capacity(cfg.graph, U, dom)
        resid = abs(cap * energy(cfg.graph, e.normalized(), dom) - 1.0)
        return {"cap": cap, "identity_residual": resid,
                "support": [list(v) for v in e.support.vertices],
                "weights": e.weights.tolist(),
                "pass": resid <= 1e-6}

    def finalize(results, outdir):
        r = results["capacity"]
        rows = [[" ".join(map(str, v)), w]
                for v, w in zip(r["support"], r["weights"])]
        write_csv(os.path.join(outdir, "results.csv"),
                  ["vertex", "equilibrium_weight"], rows,
                  comments={"config_hash": cfg.hash, "cap": r["cap"],
                            "identity_residual": r["identity_residual"]})
        figs = [figure_bars(outdir, "equilibrium.png",
                            [" ".join(map(str, v)) for v in r["support"]],
                            r["weights"], "equilibrium weight",
                            f"cap = {r['cap']:.6g}")]
        return r["pass"], figs

    return [("capacity", task)], finalize


def _exp_sample(cfg: Config):
    radius = cfg.geo_int("radius", 2)
    method = cfg.mc.get("method", "heatbath") if cfg.mc else "heatbath"
    n = cfg.mc_int("n", 1000)
    chunk = cfg.mc_int("chunk", max(1, n // 10))
    thinning = cfg.mc_int("thinning", 1)
    burn_in = cfg.mc_int("burn_in", -1)
    burn_in = None if burn_in < 0 else burn_in
    zero = (0,) * cfg.d
    region = ball(cfg.graph, zero, radius, metric="ellinf")
    bc = BoundaryCondition.constant(0.0)
    n_chunks = (n + chunk - 1) // chunk

    def make_task(ci, size):
        def task():
            if method == "exact":
                stiff = dict(cfg.potential.params).get("stiffness", 1.0)
                s = gaussian_exact_sample(cfg.graph, region, bc,
                                          stiffness=stiff, n=size,
                                          seed=cfg.seed, beta=cfg.potential.beta,
                                          stream_id=ci)
            else:
                s = sample_gibbs(cfg.potential, cfg.graph, region, bc,
                                 method, n_samples=size, burn_in=burn_in,
                                 thinning=thinning, seed=cfg.seed,
                                 stream_id=ci)
            center = s.fields[:, region.index(zero)]
            return {"n": size, "sum": s.fields.sum(axis=0).tolist(),
                    "sumsq": (s.fields ** 2).sum(axis=0).tolist(),
                    "center": center.tolist(), "pass": True}
        return task

    tasks = []
    left = n
    for ci in range(n_chunks):
        size = min(chunk, left)
        left -= size
        tasks.append((f"chunk-{ci:05d}", make_task(ci, size)))

    def finalize(results, outdir):
        total = sum(results[t]["n"] for t, _ in tasks)
        s1 = np.sum([np.array(results[t]["sum"]) for t, _ in tasks], axis=0)
        s2 = np.sum([np.array(results[t]["sumsq"]) for t, _ in tasks], axis=0)
        mean = s1 / total
        var = s2 / total - mean ** 2
        rows = [[" ".join(map(str, v)), mean[i], var[i]]
                for i, v in enumerate(region.vertices)]
        write_csv(os.path.join(outdir, "results.csv"),
                  ["vertex", "mean", "variance"], rows,
                  comments={"config_hash": cfg.hash, "n": total,
                            "method": method})
        center = np.concatenate([results[t]["center"] for t, _ in tasks])
        overlay = None
        if cfg.potential.name == "quadratic":
            sd = math.sqrt(var[region.index(zero)])
            xs = np.linspace(-4 * sd, 4 * sd, 200)
            ys = np.exp(-xs ** 2 / (2 * sd * sd)) / (sd * math.sqrt(2 * math.pi))
            overlay = ("fitted normal", xs, ys)
        figs = [figure_hist(outdir, "center_histogram.png", center,
                            "height at the center vertex",
                            f"{cfg.potential.name}, {method}",
                            overlay=overlay)]
        return True, figs

    return tasks, finalize


def _exp_cross_section(cfg: Config):
    from .hswalk import cross_section
    zero = (0,) * cfg.d
    s_radius = cfg.geo_int("s_radius", 1)
    sp_center = _vertex(cfg.geo.get("sprime_center",
                                    " ".join(["6"] + ["0"] * (cfg.d - 1))))
    sp_radius = cfg.geo_int("sprime_radius", 1)
    lam_radius = cfg.geo_int("lambda_radius", 10)
    n_paths = cfg.mc_int("n_paths", 500)
    dt = float(cfg.mc.get("dt", "0.05")) if cfg.mc else 0.05

    def task():
        S = ball(cfg.graph, zero, s_radius, metric="ell1")
        sp = ball(cfg.graph, sp_center, sp_radius, metric="ell1")
        lam = ball(cfg.graph, zero, lam_radius, metric="ellinf")
        sigma, ci, table = cross_section(cfg.potential, cfg.graph, S, sp,
                                         lam, n_paths=n_paths, seed=cfg.seed,
                                         dt=dt)
        return {"sigma": sigma, "ci": list(ci),
                "table": [{"x": list(r["x"]), "bc": r["bc"], "p": r["p"],
                           "stderr": r["stderr"], "W": r["W"]}
                          for r in table],
                "pass": True}

    def finalize(results, outdir):
        r = results["cross_section"]
        rows = [[" ".join(map(str, row["x"])), row["bc"], row["p"],
                 row["stderr"], row["W"]] for row in r["table"]]
        write_csv(os.path.join(outdir, "results.csv"),
                  ["x", "bc", "p", "stderr", "W"], rows,
                  comments={"config_hash": cfg.hash, "sigma": r["sigma"],
                            "ci_low": r["ci"][0], "ci_high": r["ci"][1]})
        figs = [figure_bars(outdir, "cross_section.png",
                            [" ".join(map(str, row["x"]))
                             for row in r["table"]],
                            [row["W"] for row in r["table"]],
                            "W(p)", f"cross-section = {r['sigma']:.4g}")]
        return True, figs

    return [("cross_section", task)], finalize


def _exp_decouple(cfg: Config):
    zero = (0,) * cfg.d
    x = _vertex(cfg.geo.get("x", " ".join(["-2"] + ["0"] * (cfg.d - 1))))
    y = _vertex(cfg.geo.get("y", " ".join(["2"] + ["0"] * (cfg.d - 1))))
    radius = cfg.geo_int("radius", 3)
    h = float(cfg.geo.get("h", "0.0"))
    eps_list = _floats(cfg.geo.get("eps", "0.1 0.3 1.0"))
    n = cfg.mc_int("n", 2000)
    lam = ball(cfg.graph, zero, radius, metric="ellinf")
    S = Region(cfg.graph, [x])
    sp = Region(cfg.graph, [y])
    event = MonotoneEvent.literal(x)
    f = Observable.indicator(MonotoneEvent.literal(y))

    def make_task(eps):
        def task():
            rep = decoupling_experiment(
                cfg.potential, cfg.graph, lam, S, sp, event, f, h, eps, n,
                seed=cfg.seed, constants=cfg.constants)
            return rep
        return task

    tasks = [(f"eps-{eps:g}", make_task(eps)) for eps in eps_list]

    def finalize(results, outdir):
        rows = []
        ok = True
        for tid, _ in tasks:
            r = results[tid]
            ok = ok and r["pass"]
            rows.append([r["eps"], r["lhs"], r["lhs_se"], r["upper"],
                        r["lower"], r["delta"], r["sigma_hat"], r["M"],
                        int(r["pass"])])
        write_csv(os.path.join(outdir, "results.csv"),
                  ["eps", "lhs", "lhs_se", "upper", "lower", "delta",
                   "sigma_hat", "M", "pass"], rows,
                  comments={"config_hash": cfg.hash, "h": h, "n": n})
        eps_v = [row[0] for row in rows]
        figs = [figure_series(
            outdir, "decoupling.png", eps_v, [row[1] for row in rows],
            "sprinkling eps", "probability / bound",
            "decoupling: lhs against bounds",
            extra_series=[("upper bound", eps_v, [row[3] for row in rows]),
                          ("FKG lower", eps_v, [row[4] for row in rows])])]
        return ok, figs

    return tasks, finalize


def _exp_percolate(cfg: Config):
    zero = (0,) * cfg.d
    radius = cfg.geo_int("radius", 8)
    h_grid = _floats(cfg.geo.get("h", "-0.5 0.0 0.5"))
    l_grid = _ints(cfg.geo.get("l", "1 2 3"))
    n = cfg.mc_int("n", 400)
    region = ball(cfg.graph, zero, radius, metric="ellinf")
    stiff = dict(cfg.potential.params).get("stiffness", 1.0)
    handle = gaussian_handle(cfg.graph, region, stiffness=stiff)
    if cfg.potential.name != "quadratic":
        raise ConfigError("percolate scans use the exact Gaussian sampler; "
                          "set potential.kind = quadratic")

    def task():
        return h_plus_scan(handle, h_grid, l_grid, n, seed=cfg.seed)

    def finalize(results, outdir):
        r = results["percolate"]
        rows = []
        for i, h in enumerate(r["h_grid"]):
            for j, L in enumerate(r["L_grid"]):
                rows.append([h, L, r["p"][i][j]])
        write_csv(os.path.join(outdir, "results.csv"),
                  ["h", "L", "crossing_probability"], rows,
                  comments={"config_hash": cfg.hash, "n": r["n"]})
        write_json(os.path.join(outdir, "report.json"), r)
        figs = [figure_heatmap(outdir, "crossing.png", r["p"], r["L_grid"],
                               r["h_grid"], "L", "h",
                               "crossing probability")]
        return True, figs

    return [("percolate", task)], finalize


def _exp_renorm(cfg: Config):
    zero = (0,) * cfg.d
    R = cfg.geo_int("r_scale", 4)
    base = cfg.geo_int("base_scale", 2)
    mult = cfg.geo_int("ball_mult", 2)
    h = float(cfg.geo.get("h", "0.0"))
    eps = float(cfg.geo.get("eps", "0.5"))
    n_samples = cfg.mc_int("n", 2000)
    n_seeds = cfg.mc_int("seeds", 5)
    if cfg.potential.name != "quadratic":
        raise ConfigError("renorm checks use the exact Gaussian sampler")
    stiff = dict(cfg.potential.params).get("stiffness", 1.0)

    embs = proper_embeddings(zero, 1, R, cfg.graph, mode="sample", k=1,
                             seed=cfg.seed, strict=False, base=base,
                             ball_mult=mult)
    tau = embs[0]
    root_radius = tau.ball_radius(0)
    region = ball(cfg.graph, zero, root_radius + 2, metric="ellinf")
    if len(region) > 4000:
        raise ConfigError("renorm geometry too large for the exact sampler; "
                          "shrink r_scale/base_scale/ball_mult")
    handle = gaussian_handle(cfg.graph, region, stiffness=stiff)
    leaf_events = {m: MonotoneEvent.literal(tau.tau[m])
                   for m in tau.leaves()}

    def make_task(si):
        def task():
            return renorm_step_check(handle, tau, leaf_events, h, eps,
                                     n_samples, constants=cfg.constants,
                                     seed=cfg.seed + si)
        return task

    tasks = [(f"seed-{si}", make_task(si)) for si in range(n_seeds)]

    def finalize(results, outdir):
        rows = []
        ok = True
        for tid, _ in tasks:
            r = results[tid]
            ok = ok and r["pass"]
            rows.append([tid, r["lhs"], r["lhs_se"], r["rhs"], r["rhs_se"],
                         r["delta_n"], int(r["pass"])])
        write_csv(os.path.join(outdir, "results.csv"),
                  ["task", "lhs", "lhs_se", "rhs", "rhs_se", "delta_n",
                   "pass"], rows,
                  comments={"config_hash": cfg.hash, "eps": eps, "h": h,
                            "R": R, "base": base, "ball_mult": mult,
                            "strict_scales": False})
        figs = [figure_series(outdir, "renorm.png",
                              list(range(len(rows))),
                              [row[1] for row in rows], "seed index",
                              "probability", "one-step renormalization",
                              extra_series=[("rhs + delta",
                                             list(range(len(rows))),
                                             [row[3] for row in rows])])]
        return ok, figs

    return tasks, finalize


def _exp_even_reduce(cfg: Config):
    from .evenred import marginal_agreement_test
    zero = (0,) * cfg.d
    radius = cfg.geo_int("radius", 3)
    n = cfg.mc_int("n", 5000)
    lam = ball(cfg.graph, zero, radius, metric="ell1")
    sites = [v for v in lam if sum(v) % 2 == 0 and sum(abs(c) for c in v) <= 2]

    def task():
        return marginal_agreement_test(cfg.potential, cfg.potential.beta,
                                       lam, sites, n, seed=cfg.seed)

    def finalize(results, outdir):
        r = results["even_reduce"]
        rows = [[" ".join(map(str, s["site"])), s["ks_statistic"],
                 s["ks_pvalue"], s["mean_full"], s["mean_even"],
                 s["var_full"], s["var_even"], int(s["pass"])]
                for s in r["sites"]]
        write_csv(os.path.join(outdir, "results.csv"),
                  ["site", "ks_statistic", "ks_pvalue", "mean_full",
                   "mean_even", "var_full", "var_even", "pass"], rows,
                  comments={"config_hash": cfg.hash, "n": r["n"],
                            "ks_critical": r["ks_critical"]})
        write_json(os.path.join(outdir, "report.json"), r)
        figs = [figure_bars(outdir, "ks_by_site.png",
                            [" ".join(map(str, s["site"]))
                             for s in r["sites"]],
                            [s["ks_statistic"] for s in r["sites"]],
                            "KS statistic",
                            f"critical value {r['ks_critical']:.4g}")]
        return r["pass"], figs

    return [("even_reduce", task)], finalize


# ---------------------------------------------------------------------------
# checkpointing

def _checkpoint_payload(cfg_hash: str, completed: dict) -> dict:
    body = {"version": CHECKPOINT_VERSION, "config_hash": cfg_hash,
            "completed": {k: completed[k] for k in sorted(completed)}}
    blob = json.dumps(body, sort_keys=True)
    body["checksum"] = hashlib.sha256(blob.encode()).hexdigest()
    return body


def _write_checkpoint(outdir: str, cfg_hash: str, completed: dict) -> None:
    path = os.path.join(outdir, "checkpoint.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(_checkpoint_payload(cfg_hash, completed), fh, indent=2,
                  sort_keys=True)
    os.replace(tmp, path)


def _read_checkpoint(outdir: str, cfg_hash: str) -> dict:
    path = os.path.join(outdir, "checkpoint.json")
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        try:
            body = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorruptCheckpoint(f"checkpoint does not parse: {exc}")
    if body.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionMismatch(
            f"checkpoint version {body.get('version')} != "
            f"{CHECKPOINT_VERSION}")
    stored = body.pop("checksum", None)
    blob = json.dumps(body, sort_keys=True)
    if stored != hashlib.sha256(blob.encode()).hexdigest():
        raise CorruptCheckpoint("checkpoint checksum mismatch")
    if body.get("config_hash") != cfg_hash:
        raise CorruptCheckpoint("checkpoint belongs to a different config")
    return body["completed"]


# ---------------------------------------------------------------------------
# run / resume

def _execute(cfg: Config, outdir: str, completed: dict) -> int:
    tasks, finalize = _build_tasks(cfg)
    started = time.time()
    manifest_path = os.path.join(outdir, "manifest.json")
    manifest = {
        "version": __version__,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config_hash": cfg.hash,
        "config": cfg.text,
        "constants": cfg.constants.to_dict(),
        "status": "running",
        "tasks": [t for t, _ in tasks],
        "tolerances": {"solver_residual": 1e-10,
                       "capacity_identity": 1e-6,
                       "statistical_sigma": 3.0},
    }
    write_json(manifest_path, manifest)
    todo = [(tid, fn) for tid, fn in tasks if tid not in completed]
    if todo:
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                futures = [(tid, pool.submit(fn)) for tid, fn in todo]
                for tid, fut in futures:
                    completed[tid] = fut.result()
                    _write_checkpoint(outdir, cfg.hash, completed)
        else:
            for tid, fn in todo:
                completed[tid] = fn()
                _write_checkpoint(outdir, cfg.hash, completed)
    passed, figures = finalize(completed, outdir)
    manifest["status"] = "complete"
    manifest["passed"] = bool(passed)
    # wall time goes to stderr, not the manifest, so reruns with the same
    # config are byte-identical
    print(f"wall time {time.time() - started:.1f}s", file=sys.stderr)
    manifest["results"] = sorted(
        f for f in os.listdir(outdir)
        if f.endswith((".csv", ".json", ".png")) and f != "manifest.json")
    write_json(manifest_path, manifest)
    return 0 if passed else 2


def run_experiment(config_path: str, output: str | None = None) -> tuple[str, int]:
    cfg = load_config(config_path)
    outdir = output or cfg.output
    os.makedirs(outdir, exist_ok=True)
    code = _execute(cfg, outdir, {})
    return outdir, code


def resume(outdir: str) -> tuple[str, int]:
    manifest_path = os.path.join(outdir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"{outdir} has no manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    cfg = Config(manifest["config"])
    if manifest.get("status") == "complete" and \
            os.path.exists(os.path.join(outdir, "results.csv")):
        return outdir, 0 if manifest.get("passed", True) else 2
    completed = _read_checkpoint(outdir, cfg.hash)
    code = _execute(cfg, outdir, completed)
    return outdir, code


# ---------------------------------------------------------------------------
# entry point

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gradfield",
        description="Experiments for gradient interface models")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output", default=None)
    p_res = sub.add_parser("resume", help="continue from a checkpoint")
    p_res.add_argument("directory")
    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("config")
    sub.add_parser("list-presets", help="show available presets")
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            outdir, code = run_experiment(args.config, args.output)
            print(f"artifacts: {outdir}")
            return code
        if args.command == "resume":
            outdir, code = resume(args.directory)
            print(f"artifacts: {outdir}")
            return code
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: kind={cfg.kind} seed={cfg.seed} hash={cfg.hash[:12]}")
            return 0
        if args.command == "list-presets":
            print(json.dumps(list_presets(), indent=2))
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except GradFieldError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
