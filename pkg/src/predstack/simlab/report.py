"""Aggregation and serialization of experiment reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

CSV_FIELDS = ("method", "n", "rep", "test_lpd", "mse")


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(np.mean(v)), se


def summarize(rows, methods) -> dict:
    """Per-method mean and Monte Carlo standard error of test_lpd and mse."""
    out = {}
    for method in methods:
        sel = [r for r in rows if r["method"] == method]
        if not sel:
            continue
        lpd_mean, lpd_se = _mean_se([r["test_lpd"] for r in sel])
        mse_mean, mse_se = _mean_se([r["mse"] for r in sel])
        out[method] = {
            "reps": len(sel),
            "test_lpd_mean": lpd_mean,
            "test_lpd_se": lpd_se,
            "mse_mean": mse_mean,
            "mse_se": mse_se,
        }
    return out


def compare(report: dict, a: str, b: str, key: str = "test_lpd") -> dict:
    """Difference ``a - b`` of mean ``key`` with two standard errors.

    ``se`` combines the per-method MC standard errors as if independent;
    ``paired_se`` uses the per-rep differences (both methods see the same
    data in each rep).
    """
    s = report["summary"]
    diff = s[a][f"{key}_mean"] - s[b][f"{key}_mean"]
    se = math.hypot(s[a][f"{key}_se"], s[b][f"{key}_se"])
    ra = {r["rep"]: r[key] for r in report["rows"] if r["method"] == a}
    rb = {r["rep"]: r[key] for r in report["rows"] if r["method"] == b}
    d = [ra[k] - rb[k] for k in sorted(ra)]
    _, paired_se = _mean_se(d)
    return {"diff": diff, "se": se, "paired_se": paired_se}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_report(report: dict, out_dir, stem: str = "report") -> tuple:
    """Write ``<stem>.json`` and the tidy ``<stem>.csv``; return both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jpath = out_dir / f"{stem}.json"
    cpath = out_dir / f"{stem}.csv"
    jpath.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n",
                     encoding="utf-8")
    with open(cpath, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in report["rows"]:
            w.writerow([r["method"], r["n"], r["rep"], repr(r["test_lpd"]), repr(r["mse"])])
    extra = report.get("model_rows")
    if extra:
        mpath = out_dir / f"{stem}_models.csv"
        fields = list(extra[0])
        with open(mpath, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for r in extra:
                w.writerow([repr(r[f]) if isinstance(r[f], float) else r[f] for f in fields])
    return jpath, cpath
