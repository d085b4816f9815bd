"""Command-line driver: JSON config in, CSV + manifest out.

Subcommands:
  simulate   two-point functions and stationarity checks of the simulator
  resolvent  symmetric-resolvent quadratic forms over an (alpha, M) grid
  verify     one of the inequality suites: lemma1, remark6iii, corollary24,
             keyresult, replacement

Exit codes: 0 success / all inequalities pass, 1 an inequality check failed,
2 configuration error, 3 numerical failure (solver cap or quadrature).

A run writes a manifest.json with the full configuration, master seed, and
sha256 digests of every emitted file; re-running from the manifest's embedded
config reproduces the CSV files byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .kmc import DynamicsParams, two_point_function
from .lattice import ObservableSpec, v_gradient, v_sharp
from .mollifier import QuadratureError, TestFunctionSpec, WindowError, make_mollifier
from .resolvent import CGError, check_corollary24, kv_divergence_scan
from .verify import (
    ExperimentConfig,
    check_lemma1,
    check_remark6iii,
    check_weak_replacement,
    default_test_function,
    scan_key_result,
    v4_bound,
)

SUITES = ("lemma1", "remark6iii", "corollary24", "keyresult", "replacement")


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunManifest:
    """Reproducibility record: everything needed to regenerate the outputs.

    Re-running the same command with this file as --config must reproduce
    every CSV byte for byte (the digests below are the contract).
    """

    fluctlab_version: str
    command: str
    config: dict
    seed: object
    workers: int
    started: str
    finished: str
    outputs: dict

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(row[h]) for h in header))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    if not isinstance(doc, dict):
        raise ConfigError("top-level JSON value must be an object")
    if "config" in doc and "fluctlab_version" in doc:
        doc = doc["config"]  # a manifest was passed; rerun from its embedded config
        if not isinstance(doc, dict):
            raise ConfigError("manifest field 'config' must be an object")
    return doc


def _need(cfg, name, kind, pred=None, note=""):
    if name not in cfg:
        raise ConfigError(f"field '{name}': missing{' (' + note + ')' if note else ''}")
    val = cfg[name]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        val = float(val)
    elif not isinstance(val, kind) or isinstance(val, bool):
        raise ConfigError(f"field '{name}': expected {kind.__name__}, got {type(val).__name__}")
    if pred is not None and not pred(val):
        raise ConfigError(f"field '{name}': value {val!r} out of range{' (' + note + ')' if note else ''}")
    return val


def _opt(cfg, name, default, kind, pred=None, note=""):
    if name not in cfg:
        return default
    return _need(cfg, name, kind, pred, note)


def _observable_from_config(cfg, M):
    spec = cfg.get("observable", "v_sharp")
    if spec == "v_sharp":
        return v_sharp(M)
    if spec == "v_gradient":
        return v_gradient(M)
    if isinstance(spec, dict):
        pairs = {(int(x), int(y)): float(c) for x, y, c in spec.get("pairs", [])}
        try:
            return ObservableSpec(M, float(spec.get("c0", 0.0)), pairs)
        except ValueError as e:
            raise ConfigError(f"field 'observable': {e}")
    raise ConfigError(f"field 'observable': unknown spec {spec!r}")


def _test_function_from_config(cfg):
    doc = cfg.get("test_function")
    if doc is None:
        return default_test_function()
    if not isinstance(doc, dict):
        raise ConfigError("field 'test_function': expected object with coeffs/sigma")
    return TestFunctionSpec.from_dict(doc)


# ---------------------------------------------------------------------------
# subcommand payloads: each returns (files, summary, passed)

def run_simulate(cfg, outdir):
    eps = _need(cfg, "eps", float, lambda v: 0 < v <= 1, "0 < eps <= 1")
    gt = _opt(cfg, "gamma_tilde", 1.0, float, lambda v: v >= 0)
    M = _need(cfg, "M", int, lambda v: v >= 4 and v % 2 == 0, "even, >= 4")
    replicas = _need(cfg, "replicas", int, lambda v: v >= 2)
    seed = _opt(cfg, "seed", 2024, int)
    times = _opt(cfg, "times", [0.25, 0.5], list)
    sites = _opt(cfg, "sites", [0, 1, 2], list)
    params = DynamicsParams(eps=eps, gamma_tilde=gt)  # range-checks gamma*sqrt(eps)

    rows = []
    for t in times:
        for x in sites:
            est, se = two_point_function(params, int(x), float(t), M, replicas, seed)
            rows.append({"t": float(t), "x": int(x), "estimate": est, "se": se,
                         "replicas": replicas})
    write_csv(os.path.join(outdir, "two_point.csv"),
              ["t", "x", "estimate", "se", "replicas"], rows)

    from .kmc import TimeProfile as TP, run_batch
    stat_rows = []
    for t in times:
        if t <= 0:
            continue
        res = run_batch(M, params, [], float(t), TP.constant(), replicas, seed + 1)
        spins = 2.0 * res.fin_occ.astype(np.float64) - 1.0
        mean = float(spins.mean())
        se = float(spins.mean(axis=1).std(ddof=1) / math.sqrt(replicas))
        stat_rows.append({"t": float(t), "mean_spin": mean, "se": se,
                          "frozen": res.frozen_count(), "replicas": replicas})
    write_csv(os.path.join(outdir, "stationarity.csv"),
              ["t", "mean_spin", "se", "frozen", "replicas"], stat_rows)
    return (["two_point.csv", "stationarity.csv"],
            {"rows": len(rows) + len(stat_rows)}, True)


def run_resolvent(cfg, outdir):
    Ms = _need(cfg, "Ms", list)
    if not Ms or any((not isinstance(m, int)) or m < 4 or m % 2 for m in Ms):
        raise ConfigError("field 'Ms': expected non-empty list of even integers >= 4")
    alphas = _opt(cfg, "alphas", None, list)
    tol = _opt(cfg, "tol", 1e-10, float, lambda v: 0 < v < 1e-2)
    V = _observable_from_config(cfg, min(Ms))
    rows = kv_divergence_scan(V, Ms, alphas, tol=tol)
    write_csv(os.path.join(outdir, "resolvent.csv"),
              ["alpha", "M", "value", "iterations", "residual"], rows)
    return ["resolvent.csv"], {"rows": len(rows)}, True


def _suite_lemma1(cfg):
    eps = _opt(cfg, "eps", 0.5, float, lambda v: 0 < v <= 1)
    M = _opt(cfg, "M", 8, int, lambda v: 4 <= v <= 8 and v % 2 == 0, "dense oracle needs M <= 8")
    T = _opt(cfg, "T", 1.0, float, lambda v: v > 0)
    beta = _opt(cfg, "beta", 1.0, float, lambda v: v > 0)
    replicas = _opt(cfg, "replicas", 20000, int, lambda v: v >= 2)
    seed = _opt(cfg, "seed", 2024, int)
    lams = _opt(cfg, "lams", [0.0, 1.0], list)
    gts = _opt(cfg, "gamma_tildes", [0.0, 1.0], list)
    rows = []
    for gt in gts:
        for lam in lams:
            c = ExperimentConfig(eps=eps, gamma_tilde=float(gt), T=T, beta=beta, M=M,
                                 replicas=replicas, seed=seed, lam=float(lam))
            V = v_sharp(M)
            rep_mc = check_lemma1(V, c, method="mc")
            lhs_oracle = check_lemma1(V, c, method="oracle").lhs
            row = rep_mc.row()
            row["lhs_oracle"] = lhs_oracle
            row["oracle_pass"] = int(lhs_oracle <= rep_mc.rhs)
            rows.append(row)
    header = ["name", "gamma_tilde", "lam", "beta", "eps", "M", "lhs", "se",
              "lhs_oracle", "rhs", "slack", "pass", "oracle_pass", "replicas",
              "frozen", "events", "method"]
    passed = all(r["pass"] and r["oracle_pass"] for r in rows)
    return rows, header, passed


def _suite_remark6iii(cfg):
    eps = _opt(cfg, "eps", 1.0 / 16.0, float, lambda v: 0 < v <= 1)
    M = _opt(cfg, "M", 512, int, lambda v: v >= 4 and v % 2 == 0)
    T = _opt(cfg, "T", 1.0, float, lambda v: v > 0)
    beta = _opt(cfg, "beta", 1.0, float, lambda v: v > 0)
    gt = _opt(cfg, "gamma_tilde", 1.0, float, lambda v: v >= 0)
    replicas = _opt(cfg, "replicas", 1000, int, lambda v: v >= 2)
    seed = _opt(cfg, "seed", 2024, int)
    G = _test_function_from_config(cfg)
    from .mollifier import build_V_G

    V = build_V_G(G, eps, M)
    c = ExperimentConfig(eps=eps, gamma_tilde=gt, T=T, beta=beta, M=M,
                         replicas=replicas, seed=seed)
    rep = check_remark6iii(V, c)
    rows = [rep.row()]
    header = ["name", "gamma_tilde", "beta", "eps", "M", "lhs", "se", "rhs",
              "slack", "pass", "replicas", "frozen", "events",
              "cg_iterations", "cg_residual"]
    return rows, header, rep.passed


def _suite_corollary24(cfg):
    M = _opt(cfg, "M", 6, int, lambda v: 4 <= v <= 10 and v % 2 == 0)
    gts = _opt(cfg, "gamma_tildes", [0.5, 1.0], list)
    eps_grid = _opt(cfg, "eps_grid", [0.25, 1.0 / 16.0], list)
    alphas = _opt(cfg, "alphas", [0.1, 1.0, 10.0], list)
    n_vectors = _opt(cfg, "vectors", 100, int, lambda v: v >= 1)
    seed = _opt(cfg, "seed", 2024, int)
    rows = check_corollary24(M, gts, eps_grid, alphas, n_vectors, seed)
    header = ["M", "gamma_tilde", "eps", "alpha", "vectors", "max_violation", "pass"]
    return rows, header, all(r["pass"] for r in rows)


def _suite_keyresult(cfg):
    eps_grid = _opt(cfg, "eps_grid", [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0], list)
    N_grid = _opt(cfg, "N_grid", [4, 8, 16, 32], list)
    T = _opt(cfg, "T", 1.0, float, lambda v: v > 0)
    G = _test_function_from_config(cfg)
    rows = []
    slopes_all = {}
    for i in (1, 2, 3):
        sub_eps = eps_grid if i == 2 else [min(eps_grid)]
        sub_N = [8 if 8 in N_grid else N_grid[len(N_grid) // 2]] if i == 2 else N_grid
        got, slopes = scan_key_result(G, i, sub_eps, sub_N, T=T)
        rows.extend(got)
        slopes_all.update({f"i={i}:{k}": v for k, v in slopes.items()})
    for eps in eps_grid:
        for N in N_grid:
            mol = make_mollifier(N)
            rows.append({"i": 4, "eps": eps, "N": N, "M": 0,
                         "value": v4_bound(G, mol, eps, T),
                         "iterations": 0, "residual": 0.0})
    header = ["i", "eps", "N", "M", "value", "iterations", "residual"]
    return rows, header, True, slopes_all


def _suite_replacement(cfg):
    grid = _opt(cfg, "grid", [[16, 1.0 / 8.0], [16, 1.0 / 32.0], [16, 1.0 / 64.0], [4, 1.0 / 64.0]], list)
    replicas = _opt(cfg, "replicas", 10000, int, lambda v: v >= 2)
    T = _opt(cfg, "T", 1.0, float, lambda v: v > 0)
    gt = _opt(cfg, "gamma_tilde", 1.0, float, lambda v: v >= 0)
    seed = _opt(cfg, "seed", 2024, int)
    G = _test_function_from_config(cfg)
    pairs = [(int(N), float(eps)) for N, eps in grid]
    rows = check_weak_replacement(G, pairs, gamma_tilde=gt, T=T, replicas=replicas, seed=seed)
    header = ["N", "eps", "M", "stat", "se", "replicas", "frozen", "events"]
    return rows, header, True


def run_verify(suite, cfg, outdir):
    if suite == "lemma1":
        rows, header, passed = _suite_lemma1(cfg)
        extra = {}
    elif suite == "remark6iii":
        rows, header, passed = _suite_remark6iii(cfg)
        extra = {}
    elif suite == "corollary24":
        rows, header, passed = _suite_corollary24(cfg)
        extra = {}
    elif suite == "keyresult":
        rows, header, passed, extra = _suite_keyresult(cfg)
    elif suite == "replacement":
        rows, header, passed = _suite_replacement(cfg)
        extra = {}
    else:
        raise ConfigError(f"unknown suite {suite!r}; available: {', '.join(SUITES)}")
    name = f"{suite}.csv"
    for row in rows:
        for h in header:
            row.setdefault(h, "")
    write_csv(os.path.join(outdir, name), header, rows)
    summary = {"suite": suite, "pass": bool(passed), "rows": len(rows)}
    summary.update(extra)
    return [name], summary, passed


# ---------------------------------------------------------------------------

def _resolve_workers(args_workers):
    if args_workers is not None:
        return args_workers
    env = os.environ.get("FLUCTLAB_WORKERS")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"FLUCTLAB_WORKERS must be an integer, got {env!r}")
    return 0  # library default


def _apply_workers(workers):
    if workers and workers > 0:
        import numba

        numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fluctlab",
        description="numerical laboratory for weakly asymmetric exclusion",
    )
    parser.add_argument("--version", action="version", version=f"fluctlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("simulate", "trajectory statistics: two-point functions, stationarity"),
        ("resolvent", "symmetric-resolvent quadratic form scans"),
        ("verify", "inequality suites"),
    ):
        sp = sub.add_parser(name, help=desc)
        sp.add_argument("--config", required=True, help="JSON config (or manifest) path")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override master seed")
        sp.add_argument("--workers", type=int, default=None,
                        help="compute threads (env FLUCTLAB_WORKERS as fallback)")
        if name == "verify":
            sp.add_argument("--suite", required=True, help=f"one of: {', '.join(SUITES)}")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        workers = _resolve_workers(args.workers)
        _apply_workers(workers)
        if args.command == "verify" and args.suite not in SUITES:
            raise ConfigError(f"unknown suite {args.suite!r}; available: {', '.join(SUITES)}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    try:
        if args.command == "simulate":
            files, summary, passed = run_simulate(cfg, args.out)
        elif args.command == "resolvent":
            files, summary, passed = run_resolvent(cfg, args.out)
        else:
            files, summary, passed = run_verify(args.suite, cfg, args.out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (WindowError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (CGError, QuadratureError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3

    summary_name = "summary.json"
    with open(os.path.join(args.out, summary_name), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files = files + [summary_name]

    manifest = RunManifest(
        fluctlab_version=__version__,
        command=args.command + (f" --suite {args.suite}" if args.command == "verify" else ""),
        config=cfg,
        seed=cfg.get("seed"),
        workers=workers,
        started=started,
        finished=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        outputs={name: _sha256(os.path.join(args.out, name)) for name in files},
    )
    manifest.write(os.path.join(args.out, "manifest.json"))

    print(json.dumps(summary, sort_keys=True))
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
