"""Command-line interface.

Exit codes: 0 success, 2 invalid input (manifest, files, flags), 3 numerical
failure.  Payloads go to ``--out`` (or stdout); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    ManifestError,
    MissingLogMarginal,
    MissingPredMean,
    load_manifest,
    read_matrix,
    write_matrix,
)
from .psis import loo_all
from .scoring import GridCoverage, KernelDensity, MixtureDensity, Normal, ScoreSpec, score
from .weights import (
    DEFAULT_BB_SAMPLES,
    METHODS,
    MIN_BB_SAMPLES,
    NonFinite,
    bma,
    pseudo_bma,
    pseudo_bma_lognormal,
    pseudo_bma_plus,
    select_best,
    stack_logscore,
    stack_means,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def _parse_methods(text: str) -> list:
    if text.strip() == "all":
        return list(METHODS)
    methods = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise UsageError(f"unknown method(s) {unknown}; choose from {', '.join(METHODS)} or 'all'")
    return methods


def _parse_grid(text: str) -> tuple:
    try:
        lo, hi, pts = text.split(":")
        return float(lo), float(hi), int(pts)
    except ValueError:
        raise UsageError(f"--grid must look like LO:HI:N, got {text!r}") from None


def _read_vector(path) -> np.ndarray:
    return read_matrix(path).ravel()


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _block(method, ids, w, objective=None, diagnostics=None) -> dict:
    out = {
        "method": method,
        "weights": [{"model": mid, "weight": round(float(v), 6)} for mid, v in zip(ids, w)],
    }
    if objective is not None:
        out["objective"] = float(objective)
    out["diagnostics"] = diagnostics or {}
    return out


def compute_weights(manifest, methods, bb_samples, seed, y=None, threads=1) -> tuple:
    """Run the requested methods; returns (output blocks in order, LooResult or None)."""
    ids = manifest.model_ids
    need_loo = any(m != "bma" and m != "select-marginal" for m in methods)
    loo = loo_all(manifest, threads=threads) if need_loo else None
    if "stack-means" in methods:
        if loo.loo_mean is None:
            missing = [m.model_id for m in manifest.models if m.pred_mean is None]
            raise MissingPredMean("stack-means needs pred_mean for model(s): " + ", ".join(missing))
        if y is None:
            raise UsageError("stack-means needs observations: pass --y or set 'y' in the manifest")
    if "bma" in methods or "select-marginal" in methods:
        manifest.log_marginals()
    blocks = []
    for method in methods:
        diag = {}
        obj = None
        if method == "stacking":
            sol = stack_logscore(loo.loo_lpd, bb_samples=bb_samples, seed=seed)
            if not sol.converged:
                raise NumericalFailure("stacking optimizer did not converge")
            w, obj = sol.weights.w, sol.objective
            diag = {"iterations": sol.iterations, "converged": sol.converged, **sol.diagnostics}
        elif method == "stack-means":
            sol = stack_means(loo.loo_mean, y)
            w, obj = sol.weights.w, sol.objective
            diag = {"converged": sol.converged}
        elif method == "pseudo-bma":
            w = pseudo_bma(loo.elpd_totals()).w
        elif method == "pseudo-bma-lognormal":
            w = pseudo_bma_lognormal(loo.elpd_totals(), loo.elpd_se()).w
        elif method == "pseudo-bma-plus":
            w = pseudo_bma_plus(loo.loo_lpd, B=bb_samples, seed=seed).w
            diag = {"bb_samples": bb_samples, "seed": seed}
        elif method == "bma":
            w = bma(manifest.log_marginals(), manifest.prior()).w
        elif method == "select-loo":
            w = select_best(loo.elpd_totals(), "loo").w
        else:
            w = select_best(manifest.log_marginals(), "marginal").w
        if loo is not None and method not in ("bma", "select-marginal"):
            diag["khat_warnings"] = len(loo.warnings)
        blocks.append(_block(method, ids, w, obj, diag))
    return blocks, loo


_TITLES = {
    "stacking": "The stacking weights are:",
    "stack-means": "The stacking-of-means weights are:",
    "pseudo-bma": "The Pseudo-BMA weights are:",
    "pseudo-bma-lognormal": "The Pseudo-BMA weights (lognormal adjustment) are:",
    "pseudo-bma-plus": "The Pseudo-BMA+ weights using Bayesian Bootstrap are:",
    "bma": "The BMA weights are:",
    "select-loo": "The best model by LOO is:",
    "select-marginal": "The best model by marginal likelihood is:",
}


def format_table(blocks) -> str:
    """Two-row weight tables: model labels over weights."""
    buf = io.StringIO()
    for b in blocks:
        labels = [f'"{e["model"]}"' for e in b["weights"]]
        vals = [f'"{e["weight"]:.6f}"' for e in b["weights"]]
        width = [max(len(l), len(v)) for l, v in zip(labels, vals)]
        buf.write(_TITLES[b["method"]] + "\n")
        buf.write("[1,] " + " ".join(l.ljust(wd) for l, wd in zip(labels, width)).rstrip() + "\n")
        buf.write("[2,] " + " ".join(v.ljust(wd) for v, wd in zip(vals, width)).rstrip() + "\n\n")
    return buf.getvalue()


def format_csv(blocks) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "model", "weight"])
    for b in blocks:
        for e in b["weights"]:
            w.writerow([b["method"], e["model"], f'{e["weight"]:.6f}'])
    return buf.getvalue()


def cmd_weights(args) -> int:
    manifest = load_manifest(args.manifest)
    methods = _parse_methods(args.method)
    seed = manifest.seed if args.seed is None else args.seed
    if args.bb_samples < MIN_BB_SAMPLES:
        raise UsageError(f"--bb-samples must be at least {MIN_BB_SAMPLES}")
    y = None
    if args.y is not None:
        y = _read_vector(args.y)
    elif manifest_y(args.manifest) is not None:
        y = _read_vector(manifest_y(args.manifest))
    if y is not None and y.size != manifest.n:
        raise ManifestError(f"y has {y.size} values, models have n={manifest.n}")
    blocks, loo = compute_weights(manifest, methods, args.bb_samples, seed, y, args.threads)
    if loo is not None:
        print(f"k-hat > 0.7 in {len(loo.warnings)} of {loo.n * loo.K} cells", file=sys.stderr)
        for warn in loo.sample_size_warnings:
            print(f"warning: n={warn['n']} < 5 * p_loo={warn['p_loo']:.2f} for {warn['model']}",
                  file=sys.stderr)
    if args.format == "csv":
        text = format_csv(blocks)
    elif args.format == "table":
        text = format_table(blocks)
    else:
        payload = blocks[0] if len(blocks) == 1 else blocks
        text = json.dumps(payload, indent=2) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def manifest_y(path):
    try:
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if isinstance(spec, dict) and spec.get("y"):
        return Path(path).parent / spec["y"]
    return None


def cmd_psis(args) -> int:
    manifest = load_manifest(args.manifest)
    loo = loo_all(manifest, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "loo_lpd.csv", loo.loo_lpd)
    write_matrix(out / "k_hat.csv", loo.k_hat)
    (out / "khat_warnings.json").write_text(json.dumps(loo.warnings, indent=2) + "\n",
                                            encoding="utf-8")
    summary = [
        {"model": mid, "elpd_loo": e.total, "se": e.se, "p_loo": e.p_loo}
        for mid, e in zip(loo.model_ids, loo.elpd)
    ]
    doc = {"models": summary, "sample_size_warnings": loo.sample_size_warnings}
    (out / "elpd.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"k-hat > 0.7 in {len(loo.warnings)} of {loo.n * loo.K} cells", file=sys.stderr)
    return EXIT_OK


def _load_components(path) -> tuple:
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read components file: {exc}") from None
    ids, comps = [], []
    for entry in spec.get("components", []):
        ids.append(str(entry["id"]))
        if "normal" in entry:
            mu, sd = entry["normal"]
            comps.append(Normal(mu, sd))
        elif "draws" in entry:
            comps.append(KernelDensity(read_matrix(path.parent / entry["draws"]).ravel()))
        else:
            raise UsageError(f"component {entry['id']!r} needs 'normal' or 'draws'")
    if not comps:
        raise UsageError("components file lists no components")
    return ids, comps


def cmd_score(args) -> int:
    ids, comps = _load_components(args.components)
    try:
        doc = json.loads(Path(args.weights).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read weights file: {exc}") from None
    blocks = doc if isinstance(doc, list) else [doc]
    if args.method is not None:
        blocks = [b for b in blocks if b["method"] == args.method]
        if not blocks:
            raise UsageError(f"no {args.method!r} block in weights file")
    block = blocks[0]
    wmap = {e["model"]: float(e["weight"]) for e in block["weights"]}
    if set(wmap) != set(ids):
        raise UsageError("weights and components name different models")
    w = np.array([wmap[i] for i in ids])
    w = w / w.sum()  # weights are stored rounded to 6 decimals
    grid = _parse_grid(args.grid) if args.grid else None
    spec = ScoreSpec(rule=args.rule, beta=args.beta, grid=grid)
    y = _read_vector(args.y)
    mix = MixtureDensity(w, comps)
    vals = np.atleast_1d(score(mix, y, spec, rng=np.random.default_rng(args.seed)))
    doc = {
        "rule": args.rule,
        "method": block["method"],
        "mean_score": float(np.mean(vals)),
        "scores": [float(v) for v in vals],
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _build_config(cls, spec: dict):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(spec) - names)
    if unknown:
        raise UsageError(f"unknown config key(s): {unknown}")
    return cls(**spec)


def cmd_simulate(args) -> int:
    from .simlab import GmConfig, RegConfig, run_gm_experiment, run_regression_experiment, write_report

    try:
        spec = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    spec = dict(spec)
    name = spec.pop("experiment", None)
    if args.seed is not None:
        spec["seed"] = args.seed
    if name == "gm":
        report = run_gm_experiment(_build_config(GmConfig, spec), threads=args.threads)
    elif name == "regression":
        report = run_regression_experiment(_build_config(RegConfig, spec), threads=args.threads)
    else:
        raise UsageError(f"unknown experiment {name!r}; expected 'gm' or 'regression'")
    jpath, cpath = write_report(report, args.out)
    print(f"wrote {jpath} and {cpath}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="predstack", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("weights", help="model weights from a manifest")
    w.add_argument("--manifest", required=True)
    w.add_argument("--method", default="stacking", help="comma list or 'all'")
    w.add_argument("--bb-samples", type=int, default=DEFAULT_BB_SAMPLES)
    w.add_argument("--seed", type=int, default=None, help="defaults to the manifest seed")
    w.add_argument("--y", default=None, help="observations CSV (stack-means)")
    w.add_argument("--out", default=None)
    w.add_argument("--format", choices=("json", "csv", "table"), default="json")
    w.add_argument("--threads", type=int, default=1)
    w.set_defaults(func=cmd_weights)

    s = sub.add_parser("psis", help="PSIS-LOO densities and k-hat diagnostics")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_psis)

    c = sub.add_parser("score", help="score a weighted mixture on observations")
    c.add_argument("--components", required=True)
    c.add_argument("--weights", required=True)
    c.add_argument("--method", default=None)
    c.add_argument("--y", required=True)
    c.add_argument("--rule", choices=("log", "quadratic", "crps", "energy"), default="log")
    c.add_argument("--grid", default=None, help="LO:HI:N (write --grid=LO:HI:N when LO < 0)")
    c.add_argument("--beta", type=float, default=1.0)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_score)

    m = sub.add_parser("simulate", help="run a simulation experiment from a config")
    m.add_argument("--config", required=True)
    m.add_argument("--out", required=True, help="output directory")
    m.add_argument("--seed", type=int, default=None)
    m.add_argument("--threads", type=int, default=1)
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ManifestError, MissingLogMarginal, MissingPredMean, UsageError, GridCoverage) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NonFinite, NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
