"""Command-line entry point: ``noisyrisk run <experiment> [--config FILE] [flags]``.

Every run writes ``<experiment>.json`` (config echo, tool version, seed,
checks, results) and ``<experiment>.csv`` into ``--output-dir`` and prints
one verdict line per check.  Exit status: 0 when every check passes, 2 when
a check fails, 1 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._random import make_rng, uniform_simplex
from .approx import build_approximant, named_target
from .losses import LossSpec, asymmetry_witness, lipschitz_audit, symmetry_constant
from .mixing import (
    BlockScheme,
    MixingChain,
    agreement_functional,
    beta_coefficients,
    block_swap_gap,
    chain_from_dict,
)
from .noise import NoiseChannel, find_tolerance_witness, random_instance, tolerance_check
from .risk import CSV_COLUMNS, ExperimentConfig, bound_terms, excess_risk_experiment, rademacher_bound, rademacher_estimate

REQUIRED = object()


class UsageError(Exception):
    """Bad flags or configuration; maps to exit status 1."""


# name -> (kind, default, help); kinds: int, float, str, ints, floats, strs, json
PARAMS = {
    "approx": {
        "d": ("int", REQUIRED, "input dimension"),
        "k": ("int", REQUIRED, "largest accuracy level; levels 1..k are built"),
        "target": ("str", "sin-product", "target name (constant, coordinate, sin-product, gaussian-bump)"),
        "K": ("int", 1, "output dimension"),
        "tau": ("float", 1.0, "smoothness"),
        "mc_samples": ("int", 100_000, "Monte-Carlo points for the L2 error"),
        "max_cells": ("int", 1_000_000, "largest allowed grid (N+1)^d"),
    },
    "loss-audit": {
        "losses": ("strs", ["l1", "ce", "rce"], "losses to audit"),
        "K": ("ints", [2, 3, 5, 10], "class counts"),
        "trials": ("int", 100_000, "random pairs per audit"),
        "A": ("float", -4.0, "log 0 value of reverse cross entropy"),
        "points": ("int", 100, "simplex points for the symmetry check"),
    },
    "noise-tolerance": {
        "loss": ("str", REQUIRED, "loss name"),
        "K": ("int", REQUIRED, "class count"),
        "eta": ("float", REQUIRED, "uniform flip rate in [0, 1/K]"),
        "A": ("float", -4.0, "log 0 value of reverse cross entropy"),
        "instances": ("int", 50, "random instances"),
        "n": ("int", 20, "points per instance"),
        "hypotheses": ("int", 200, "hypotheses per instance"),
    },
    "mixing-beta": {
        "chain": ("json", {"kind": "two_state", "stay": 0.8}, "chain document (JSON)"),
        "max_lag": ("int", 20, "largest lag"),
    },
    "mixing-swap": {
        "chain": ("json", {"kind": "two_state", "stay": 0.8}, "chain document (JSON)"),
        "a_n": ("ints", [1, 2, 4, 8], "block lengths"),
        "mu_n": ("int", 8, "blocks per half path"),
        "trials": ("int", 20_000, "sampled paths"),
    },
    "rademacher": {
        "d": ("int", 2, "input dimension"),
        "hidden": ("ints", [8], "hidden widths"),
        "budget": ("float", 1.0, "norm budget M"),
        "n": ("int", 100, "sample size"),
        "radius": ("float", 1.0, "input radius B"),
        "trials": ("int", 20, "sign vectors"),
        "steps": ("int", 200, "ascent steps"),
        "restarts": ("int", 5, "ascent restarts"),
    },
    "excess-risk": {
        "d": ("int", 2, "input dimension (<= 3)"),
        "K": ("int", 2, "class count"),
        "target": ("str", "sin-product", "kappa0 target"),
        "tau": ("float", 1.0, "smoothness"),
        "logit_scale": ("float", 4.0, "kappa0 scale"),
        "loss": ("str", "l1", "loss name"),
        "A": ("float", -4.0, "log 0 value of reverse cross entropy"),
        "stay": ("float", 0.5, "sticky-chain holding probability (0 gives i.i.d.)"),
        "cells": ("int", 4, "cells per axis of the chain state space"),
        "n_grid": ("ints", [256, 1024], "sample sizes"),
        "a_grid": ("ints", [1, 4], "block lengths"),
        "eta_grid": ("floats", [0.0, 0.1, 0.3], "flip rates"),
        "M_grid": ("floats", [8.0], "norm budgets"),
        "width": ("int", 16, "hidden width"),
        "depth": ("int", 2, "hidden layers"),
        "lr": ("float", 0.5, "step size"),
        "max_steps": ("int", 2000, "gradient steps"),
        "restarts": ("int", 2, "training restarts"),
        "approx_max_k": ("int", 2, "largest approximant level for the approximation error"),
    },
}

CONFIG_KEYS = {"subcommand", "seed", "output_dir", "parameters"}


def _convert(kind: str, value, name: str):
    try:
        if kind in ("int", "float", "str"):
            if isinstance(value, (list, dict)):
                raise ValueError
            if kind == "int":
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError
                return int(value)
            return float(value) if kind == "float" else str(value)
        if kind == "json":
            return json.loads(value) if isinstance(value, str) else value
        base = {"ints": int, "floats": float, "strs": str}[kind]
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        elif not isinstance(value, list):
            value = [value]
        return [base(v) for v in value]
    except (TypeError, ValueError, json.JSONDecodeError):
        raise UsageError(f"parameter '{name}' has an invalid value {value!r} (expected {kind})") from None


def _parse_seed(value) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise UsageError(f"seed must be an integer, got {value!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return seed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="noisyrisk", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"noisyrisk {__version__}")
    top = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = top.add_parser("run", help="run one experiment")
    subs = run.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, params in PARAMS.items():
        sp = subs.add_parser(name, help=f"{name} experiment",
                             description=f"Run the {name} experiment. Parameters may also come "
                                         "from --config; flags override the file.")
        sp.add_argument("--config", help="JSON file with keys subcommand, seed, output_dir, parameters")
        sp.add_argument("--seed", default=None, help="64-bit seed (default 0)")
        sp.add_argument("--output-dir", default=None, help="artifact directory (default results/)")
        for key, (kind, default, text) in params.items():
            req = " (required)" if default is REQUIRED else f" (default {default})"
            sp.add_argument(f"--{key}", dest=f"p_{key}", default=None, help=f"{text}{req}")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge the config file and flags into ``{subcommand, seed, output_dir, parameters}``."""
    sub = args.subcommand
    spec = PARAMS[sub]
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        for key in doc:
            if key not in CONFIG_KEYS:
                raise UsageError(f"unknown config key '{key}'")
        if doc.get("subcommand", sub) != sub:
            raise UsageError(f"config is for '{doc['subcommand']}', not '{sub}'")
    raw = dict(doc.get("parameters", {}))
    if not isinstance(raw, dict):
        raise UsageError("config 'parameters' must be an object")
    for key in raw:
        if key not in spec:
            raise UsageError(f"unknown parameter '{key}' for {sub}")
    for key in spec:
        flag = getattr(args, f"p_{key}")
        if flag is not None:
            raw[key] = flag
    params = {}
    for key, (kind, default, _) in spec.items():
        if key in raw:
            params[key] = _convert(kind, raw[key], key)
        elif default is REQUIRED:
            raise UsageError(f"missing required parameter --{key}")
        else:
            params[key] = default
    seed = _parse_seed(args.seed if args.seed is not None else doc.get("seed", 0))
    out = args.output_dir or doc.get("output_dir") or "results"
    return {"subcommand": sub, "seed": seed, "output_dir": str(out), "parameters": params}


# ---------------------------------------------------------------------------
# experiments: each returns (checks, rows, csv columns, results)


def _check(name: str, passed, detail: str = "") -> dict:
    return {"name": name, "passed": passed, "detail": detail}


def _approx(p, seed):
    f = named_target(p["target"], p["d"], p["K"], p["tau"])
    checks, rows, reports = [], [], []
    for k in range(1, p["k"] + 1):
        _, rep = build_approximant(f, k, seed=seed, mc_samples=p["mc_samples"], max_cells=p["max_cells"])
        reports.append(rep.to_dict())
        rows.append({"k": k, "N": rep.N, "width": rep.width, "depth": rep.depth, "budget": rep.budget,
                     "l2_error": rep.l2_error, "l2_stderr": rep.l2_stderr, "linf_error": rep.linf_error,
                     "error_bound": rep.error_bound, "caps_ok": rep.caps_ok})
        checks.append(_check(f"caps k={k}", rep.caps_ok,
                             f"width {rep.width} depth {rep.depth} budget {rep.budget:.4g}"))
        checks.append(_check(f"error bound k={k}", rep.linf_error <= rep.error_bound,
                             f"linf {rep.linf_error:.3e} <= {rep.error_bound:.3e}"))
    cols = list(rows[0]) if rows else []
    return checks, rows, cols, {"report": reports[-1] if reports else None, "reports": reports}


def _loss_audit(p, seed):
    checks, rows = [], []
    rng = make_rng(seed)
    for name in p["losses"]:
        for K in p["K"]:
            spec = LossSpec.parse(name, K, p["A"])
            audit = lipschitz_audit(spec, p["trials"], seed=rng)
            row = {"loss": spec.name, "K": K, "trials": p["trials"], "max_ratio": audit.max_ratio,
                   "bound": audit.bound, "lipschitz_ok": audit.passed, "c0": spec.c0, "symmetry": ""}
            checks.append(_check(f"lipschitz {spec.name} K={K}", audit.passed,
                                 f"max ratio {audit.max_ratio:.4f} <= {audit.bound:.4f}"))
            preds = uniform_simplex(rng, p["points"], K)
            if spec.symmetric:
                c = symmetry_constant(spec, preds)
                ok = c is not None and abs(c - spec.c0) <= 1e-9
                row["symmetry"] = "constant" if ok else "violated"
                checks.append(_check(f"symmetry {spec.name} K={K}", ok, f"C0 = {c} (expected {spec.c0})"))
            else:
                w = asymmetry_witness(spec, p["points"], seed=rng)
                row["symmetry"] = "witness" if w else "none-found"
                checks.append(_check(f"asymmetry witness {spec.name} K={K}", w is not None,
                                     json.dumps(w) if w else "no witness"))
            rows.append(row)
    return checks, rows, list(rows[0]) if rows else [], {}


def _noise_tolerance(p, seed):
    spec = LossSpec.parse(p["loss"], p["K"], p["A"])
    channel = NoiseChannel.uniform(p["K"], p["eta"])
    rng = make_rng(seed)
    rows = []
    for t in range(p["instances"]):
        data, grid = random_instance(p["K"], p["n"], p["hypotheses"], seed=rng)
        v = tolerance_check(spec, grid, data, channel)
        rows.append({"instance": t, "passed": v.passed, "boundary": v.boundary,
                     "ranking_preserved": v.ranking_preserved,
                     "clean_argmin": " ".join(map(str, v.clean_argmin)),
                     "noisy_argmin": " ".join(map(str, v.noisy_argmin))})
    preserved = sum(r["passed"] for r in rows)
    results = {"preserved": preserved, "instances": len(rows)}
    if spec.symmetric:
        checks = [_check(f"argmin preserved {spec.name} K={p['K']} eta={p['eta']:g}",
                         preserved == len(rows), f"{preserved}/{len(rows)} instances")]
    else:
        w = find_tolerance_witness(spec, p["K"], p["eta"], instances=max(p["instances"], 200), seed=seed)
        results["witness"] = w
        checks = [_check(f"argmin preserved {spec.name} K={p['K']} eta={p['eta']:g}", None,
                         f"{preserved}/{len(rows)} instances; loss is not symmetric, "
                         + ("counterexample found" if w else "no counterexample found"))]
    return checks, rows, list(rows[0]) if rows else [], results


def _closed_form(doc: dict, s: int):
    kind = doc.get("kind")
    if kind == "two_state":
        return abs(2 * float(doc["stay"]) - 1) ** s / 2
    if kind == "sticky":
        m = int(doc["states"])
        return float(doc["stay"]) ** s * (1 - 1 / m)
    if kind == "iid":
        return 0.0
    return None


def _chain(doc) -> MixingChain:
    if not isinstance(doc, dict):
        raise UsageError("parameter 'chain' must be a JSON object")
    try:
        return chain_from_dict(doc)
    except KeyError as exc:
        raise UsageError(f"chain document is missing key {exc}") from None


def _mixing_beta(p, seed):
    chain = _chain(p["chain"])
    prof = beta_coefficients(chain, p["max_lag"])
    rows, checks, worst = [], [], 0.0
    for s, b in zip(prof.lags, prof.beta):
        ref = _closed_form(p["chain"], s)
        rows.append({"s": s, "beta_s": b, "closed_form": "" if ref is None else ref})
        if ref is not None:
            worst = max(worst, abs(b - ref))
    checks.append(_check("beta non-increasing", prof.envelope_ok()))
    if p["chain"].get("kind") == "iid":
        checks.append(_check("beta exactly zero", all(b == 0.0 for b in prof.beta)))
    elif _closed_form(p["chain"], 1) is not None:
        checks.append(_check("beta closed form", worst <= 1e-10, f"max deviation {worst:.2e}"))
    return checks, rows, ["s", "beta_s", "closed_form"], {"chain": chain.to_dict(), "beta": prof.to_dict()}


def _mixing_swap(p, seed):
    chain = _chain(p["chain"])
    rows, checks = [], []
    rng = make_rng(seed)
    for a in p["a_n"]:
        r = block_swap_gap(agreement_functional, chain, BlockScheme(a, p["mu_n"]), p["trials"], seed=rng)
        rows.append(r.to_dict())
        checks.append(_check(f"block swap a_n={a}", r.passed,
                             f"gap {r.gap:.4g} <= {r.bound:.4g} + 3*{r.stderr:.2g}"))
    return checks, rows, list(rows[0]) if rows else [], {"chain": chain.to_dict()}


def _ball(rng, n: int, d: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * radius * rng.random((n, 1)) ** (1.0 / d)


def _rademacher(p, seed):
    rng = make_rng(seed)
    dims = [p["d"]] + p["hidden"] + [1]
    x = _ball(rng, p["n"], p["d"], p["radius"])
    est = rademacher_estimate(dims, p["budget"], x, trials=p["trials"], seed=rng, steps=p["steps"],
                              restarts=p["restarts"], radius=p["radius"])
    depth = len(p["hidden"])
    b1 = rademacher_bound(p["n"], p["d"], depth, p["radius"], p["budget"])
    b4 = rademacher_bound(4 * p["n"], p["d"], depth, p["radius"], p["budget"])
    checks = [
        _check("estimate <= bound", est.passed, f"{est.estimate:.4g} <= {est.theoretical_bound:.4g}"),
        _check("bound(4n) = bound(n)/2", b4 == b1 / 2, f"{b4!r} vs {b1 / 2!r}"),
    ]
    row = {"n": p["n"], "dims": " ".join(map(str, dims)), "budget": p["budget"], "radius": p["radius"],
           "estimate": est.estimate, "std_error": est.std_error, "theoretical_bound": est.theoretical_bound}
    return checks, [row], list(row), {"estimate": est.to_dict()}


def _excess_risk(p, seed):
    cfg = ExperimentConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in p.items()}, seed=seed)
    reports = excess_risk_experiment(cfg)
    spec = LossSpec.parse(cfg.loss, cfg.K, cfg.A)
    rows = [{c: getattr(r, c) for c in CSV_COLUMNS} for r in reports]
    ratios = [r.ratio for r in reports]
    chain = cfg.truth().chain(cfg.cells, cfg.stay)
    betas = beta_coefficients(chain, max(cfg.a_grid))
    repro = all((r.term1, r.term2, r.term3) == bound_terms(spec.lipschitz_lambda, cfg.K, r.M, cfg.depth,
                                                          cfg.d, r.n, r.a_n, betas.at(r.a_n), cfg.tau)
                for r in reports)
    checks = [
        _check("bound terms reproducible", repro),
        _check("ratios finite", all(math.isfinite(v) for v in ratios),
               f"max ratio {max(ratios):.4g}" if ratios else ""),
    ]
    zero = [r for r in reports if r.eta == 0.0]
    if zero and spec.symmetric:
        dev = max(abs(r.clean_excess - r.noisy_excess) for r in zero)
        checks.append(_check("eta=0 clean = noisy excess", dev <= 1e-12, f"max deviation {dev:.2e}"))
    slope = None
    ns = sorted({r.n for r in reports})
    if len(ns) > 1:
        means = [np.mean([r.clean_excess for r in reports if r.n == n]) for n in ns]
        if min(means) > 0:
            slope = float(np.polyfit(np.log(ns), np.log(means), 1)[0])
    results = {"max_ratio": max(ratios) if ratios else None, "excess_vs_n_slope": slope,
               "reports": [r.to_dict() for r in reports]}
    return checks, rows, list(CSV_COLUMNS), results


RUNNERS = {
    "approx": _approx,
    "loss-audit": _loss_audit,
    "noise-tolerance": _noise_tolerance,
    "mixing-beta": _mixing_beta,
    "mixing-swap": _mixing_swap,
    "rademacher": _rademacher,
    "excess-risk": _excess_risk,
}


def _csv_text(rows: list, columns: list) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: repr(v) if isinstance(v, float) else v for c, v in row.items()})
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def run(config: dict, stream=None) -> int:
    """Execute a resolved config; returns the exit status."""
    stream = stream or sys.stdout
    sub = config["subcommand"]
    try:
        checks, rows, columns, results = RUNNERS[sub](config["parameters"], config["seed"])
    except UsageError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{sub}.csv").write_text(_csv_text(rows, columns))
    asserted = [c for c in checks if c["passed"] is not None]
    ok = all(c["passed"] for c in asserted)
    doc = {"tool": "noisyrisk", "version": __version__, "config": config, "seed": config["seed"],
           "passed": ok, "checks": checks, "results": results}
    (out / f"{sub}.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    for c in checks:
        tag = "INFO" if c["passed"] is None else ("PASS" if c["passed"] else "FAIL")
        print(f"{tag} {sub}: {c['name']}" + (f" ({c['detail']})" if c["detail"] else ""), file=stream)
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return run(resolve(args))
    except UsageError as exc:
        print(f"noisyrisk: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
