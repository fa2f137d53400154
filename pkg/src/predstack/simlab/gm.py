"""Gaussian-mixture experiment: N(3.4, 1) data, candidate models N(k, 1).

The candidates have no free parameters, so every draw matrix has a single
row and LOO densities are the plain log densities.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..core import Manifest, ModelDrawMatrix, validate_manifest
from ..psis import loo_all
from ..weights import (
    bma,
    combine_predictive,
    pseudo_bma,
    pseudo_bma_plus,
    stack_logscore,
    stack_means,
)
from .linreg import normal_logpdf
from .report import summarize

GM_METHODS = ("stacking", "stack-means", "bma", "pseudo-bma", "pseudo-bma-plus")


@dataclass
class GmConfig:
    n: int = 20
    mu_true: float = 3.4
    sigma_true: float = 1.0
    model_means: tuple = tuple(float(k) for k in range(1, 9))
    n_test: int = 200
    reps: int = 100
    duplicates_of_4: int = 0
    seed: int = 0
    bb_samples: int = 1000
    drift_grid: tuple = (-2.0, 10.0, 0.05)

    def __post_init__(self):
        self.model_means = tuple(float(m) for m in self.model_means)
        self.drift_grid = tuple(self.drift_grid)
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not self.model_means:
            raise ValueError("model_means must be nonempty")
        if self.duplicates_of_4 < 0:
            raise ValueError("duplicates_of_4 must be >= 0")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")


def gen_gm(config: GmConfig, seed):
    """Training and test draws from N(mu_true, sigma_true^2)."""
    rng = np.random.default_rng(seed)
    train = rng.normal(config.mu_true, config.sigma_true, config.n)
    test = rng.normal(config.mu_true, config.sigma_true, config.n_test)
    return train, test


def _model_id(mu, copy=0):
    base = f"N({mu:g},1)"
    return base if copy == 0 else f"{base}#{copy}"


def gm_loglik_matrices(data, model_means, ids=None) -> list:
    """One 1 x n matrix per candidate N(mu_k, 1); log marginal is exact."""
    y = np.asarray(data, dtype=float).ravel()
    out = []
    for k, mu in enumerate(model_means):
        ll = normal_logpdf(y, mu, 1.0)[None, :]
        mid = ids[k] if ids is not None else _model_id(mu)
        out.append(ModelDrawMatrix(mid, ll, np.full_like(ll, mu), float(ll.sum())))
    return out


def _grid(spec):
    lo, hi, step = spec
    return np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)


def _gm_weights(y, model_means, ids, bb_samples, seed):
    man = validate_manifest(Manifest(gm_loglik_matrices(y, model_means, ids), seed=0))
    loo = loo_all(man)
    return {
        "stacking": stack_logscore(loo.loo_lpd, bb_samples=bb_samples, seed=seed).weights.w,
        "stack-means": stack_means(loo.loo_mean, y).weights.w,
        "bma": bma(man.log_marginals(), man.prior()).w,
        "pseudo-bma": pseudo_bma(loo.elpd_totals()).w,
        "pseudo-bma-plus": pseudo_bma_plus(loo.loo_lpd, B=bb_samples, seed=seed).w,
    }


def _one_rep(config: GmConfig, rep: int):
    train, test = gen_gm(config, [config.seed, rep])
    mk = np.asarray(config.model_means)
    ids = [_model_id(m) for m in mk]
    wts = _gm_weights(train, mk, ids, config.bb_samples, [config.seed, rep, 1])
    test_ll = normal_logpdf(test[:, None], mk[None, :], 1.0)
    rows = []
    for method in GM_METHODS:
        w = wts[method]
        rows.append({
            "method": method,
            "n": config.n,
            "rep": rep,
            "test_lpd": float(np.mean(combine_predictive(w, test_ll))),
            "mse": float(np.mean((test - w @ mk) ** 2)),
        })

    dup_rows = []
    if config.duplicates_of_4 > 0:
        grid = _grid(config.drift_grid)
        base_lp = None
        for m in range(config.duplicates_of_4 + 1):
            means = np.concatenate([mk, np.full(m, 4.0)])
            dids = ids + [_model_id(4.0, c + 1) for c in range(m)]
            w = _gm_weights(train, means, dids, config.bb_samples, [config.seed, rep, 1])
            grid_lp = combine_predictive(w["stacking"], normal_logpdf(grid[:, None], means[None, :], 1.0))
            if base_lp is None:
                base_lp = grid_lp
            tl = normal_logpdf(test[:, None], means[None, :], 1.0)
            dup_rows.append({
                "rep": rep,
                "copies": m,
                "stacking_test_lpd": float(np.mean(combine_predictive(w["stacking"], tl))),
                "bma_test_lpd": float(np.mean(combine_predictive(w["bma"], tl))),
                "bma_group_mass": float(w["bma"][means == 4.0].sum()),
                "stacking_group_mass": float(w["stacking"][means == 4.0].sum()),
                "stacking_drift": float(np.max(np.abs(grid_lp - base_lp))),
            })
    weights = {m: [float(v) for v in w] for m, w in wts.items()}
    return rows, dup_rows, weights


def run_gm_experiment(config: GmConfig, threads: int = 1) -> dict:
    """Replicate the GM comparison; reps run on per-rep RNG streams."""
    reps = range(config.reps)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _one_rep(config, r), reps))
    else:
        results = [_one_rep(config, r) for r in reps]
    rows = [row for r, _, _ in results for row in r]
    report = {
        "experiment": "gm",
        "config": asdict(config),
        "summary": summarize(rows, GM_METHODS),
        "rows": rows,
        "weights": [w for _, _, w in results],
    }
    if config.duplicates_of_4 > 0:
        dup = [row for _, d, _ in results for row in d]
        by_m = {}
        for m in range(config.duplicates_of_4 + 1):
            sel = [r for r in dup if r["copies"] == m]
            by_m[str(m)] = {
                key: float(np.mean([r[key] for r in sel]))
                for key in ("stacking_test_lpd", "bma_test_lpd", "bma_group_mass",
                            "stacking_group_mass")
            }
            by_m[str(m)]["max_stacking_drift"] = float(max(r["stacking_drift"] for r in sel))
        report["duplicates"] = {"rows": dup, "by_copies": by_m}
    return report


def gm_bma_weight_average(n: int, datasets: int, seed: int = 0, mu_true: float = 3.4,
                          model_means=None) -> np.ndarray:
    """Average realized BMA weights over simulated GM datasets."""
    mk = np.arange(1, 9, dtype=float) if model_means is None else np.asarray(model_means, float)
    rng = np.random.default_rng(seed)
    total = np.zeros(mk.size)
    for _ in range(datasets):
        y = rng.normal(mu_true, 1.0, n)
        lm = np.array([normal_logpdf(y, m, 1.0).sum() for m in mk])
        total += bma(lm).w
    return total / datasets
