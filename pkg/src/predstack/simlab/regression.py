"""Subset-regression experiment with 15 correlated-signal covariates.

Data: ``y = X beta + eps`` with ``X_j ~ N(5, 1)`` independent and
``eps ~ N(0, 1)``.  ``beta`` is a sum of three squared-triangle bumps at
j = 4, 8, 12 scaled to a fixed signal-to-noise ratio.

``m_open_univariate``: model k regresses y on X_k alone.
``m_closed_nested``: model k regresses y on X_1..X_k.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..core import Manifest, validate_manifest
from ..psis import KHAT_WARN, elpd_summary, loo_all
from ..weights import (
    bma,
    combine_predictive,
    pseudo_bma,
    pseudo_bma_lognormal,
    pseudo_bma_plus,
    select_best,
    stack_logscore,
    stack_means,
)
from .linreg import LinRegPrior, _run_chain, fit_linreg_mcmc, log_marginal_likelihood
from .report import summarize

REG_METHODS = (
    "stacking",
    "stack-means",
    "pseudo-bma",
    "pseudo-bma-lognormal",
    "pseudo-bma-plus",
    "bma",
    "select-loo",
    "select-marginal",
)
MODES = ("m_open_univariate", "m_closed_nested")
BUMP_CENTERS = (4, 8, 12)


@dataclass
class RegConfig:
    n: int = 100
    J: int = 15
    h: float = 5.0
    snr: float = 0.8
    mode: str = "m_open_univariate"
    n_test: int = 200
    reps: int = 20
    draws: int = 1000
    seed: int = 0
    bb_samples: int = 1000
    refit_high_khat: bool = True
    x_mean: float = 5.0
    x_sd: float = 1.0
    beta_prior_var: float = 10.0
    sigma_prior_shape: float = 0.1
    sigma_prior_rate: float = 0.1

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be positive")
        if not 0 < self.snr < 1:
            raise ValueError("snr must lie in (0, 1)")
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.n < 2:
            raise ValueError("n must be at least 2")

    @property
    def prior(self) -> LinRegPrior:
        return LinRegPrior(self.beta_prior_var, self.sigma_prior_shape, self.sigma_prior_rate)


def gen_beta(J: int = 15, h: float = 5.0, snr: float = 0.8) -> np.ndarray:
    """Bump coefficients scaled so that sum(beta^2) = snr / (1 - snr)."""
    j = np.arange(1, J + 1, dtype=float)
    b = np.zeros(J)
    for c in BUMP_CENTERS:
        d = np.abs(j - c)
        b += np.where(d < h, (h - d) ** 2, 0.0)
    ss = float(b @ b)
    if ss == 0:
        raise ValueError("no nonzero coefficients for this J and h")
    gamma = math.sqrt(snr / (1.0 - snr) / ss)
    return gamma * b


def gen_regression_data(config: RegConfig, beta, rng):
    n_all = config.n + config.n_test
    X = rng.normal(config.x_mean, config.x_sd, size=(n_all, config.J))
    y = X @ beta + rng.standard_normal(n_all)
    return X[: config.n], y[: config.n], X[config.n:], y[config.n:]


def model_columns(config: RegConfig) -> list:
    if config.mode == "m_open_univariate":
        return [[k] for k in range(config.J)]
    return [list(range(k + 1)) for k in range(config.J)]


def _one_rep(config: RegConfig, beta, rep: int):
    rng = np.random.default_rng([config.seed, rep])
    X, y, Xt, yt = gen_regression_data(config, beta, rng)
    cols = model_columns(config)
    prior = config.prior
    fits = []
    models = []
    for k, c in enumerate(cols):
        fit = fit_linreg_mcmc(X[:, c], y, prior, config.draws, seed=[config.seed, rep, k])
        fits.append(fit)
        models.append(fit.draw_matrix(f"M{k + 1}", log_marginal_likelihood(X[:, c], y, prior)))
    man = validate_manifest(Manifest(models, seed=config.seed))
    loo = loo_all(man)

    # replace unreliable PSIS cells by exact refits
    n_refit = np.zeros(len(cols), dtype=int)
    if config.refit_high_khat:
        for i, k in zip(*np.nonzero(loo.k_hat > KHAT_WARN)):
            keep = np.arange(config.n) != i
            c = cols[k]
            f = _run_chain(X[keep][:, c], y[keep], prior, config.draws,
                           [config.seed, rep, int(k), int(i), 7])
            loo.loo_lpd[i, k] = f.predictive_logpdf(X[i:i + 1, c], y[i:i + 1])[0]
            loo.loo_mean[i, k] = float(f.predictive_mean(X[i:i + 1, c])[0])
            n_refit[k] += 1
        for k in np.flatnonzero(n_refit):
            old = loo.elpd[k]
            lpd_full = old.p_loo + old.total
            loo.elpd[k] = elpd_summary(loo.loo_lpd[:, k], lpd_full)

    elpd = loo.elpd_totals()
    bb_seed = [config.seed, rep, 1]
    wts = {
        "stacking": stack_logscore(loo.loo_lpd, bb_samples=config.bb_samples, seed=bb_seed).weights.w,
        "stack-means": stack_means(loo.loo_mean, y).weights.w,
        "pseudo-bma": pseudo_bma(elpd).w,
        "pseudo-bma-lognormal": pseudo_bma_lognormal(elpd, loo.elpd_se()).w,
        "pseudo-bma-plus": pseudo_bma_plus(loo.loo_lpd, B=config.bb_samples, seed=bb_seed).w,
        "bma": bma(man.log_marginals(), man.prior()).w,
        "select-loo": select_best(elpd, "loo").w,
        "select-marginal": select_best(man.log_marginals(), "marginal").w,
    }

    test_lp = np.column_stack([f.predictive_logpdf(Xt[:, c], yt) for f, c in zip(fits, cols)])
    test_mean = np.column_stack([f.predictive_mean(Xt[:, c]) for f, c in zip(fits, cols)])
    rows = []
    for method in REG_METHODS:
        w = wts[method]
        rows.append({
            "method": method,
            "n": config.n,
            "rep": rep,
            "test_lpd": float(np.mean(combine_predictive(w, test_lp))),
            "mse": float(np.mean((yt - test_mean @ w) ** 2)),
        })
    model_rows = []
    for k in range(len(cols)):
        e = loo.elpd[k]
        model_rows.append({
            "model": f"M{k + 1}",
            "n": config.n,
            "rep": rep,
            "elpd_loo_mean": e.total / config.n,
            "elpd_test_mean": float(np.mean(test_lp[:, k])),
            "elpd_test_sum": float(np.sum(test_lp[:, k])),
            "p_loo": e.p_loo,
            "p_loo_over_n": e.p_loo / config.n,
            "max_khat": float(np.max(loo.k_hat[:, k])),
            "n_refit": int(n_refit[k]),
        })
    weights = {m: [float(v) for v in w] for m, w in wts.items()}
    return rows, model_rows, weights


def run_regression_experiment(config: RegConfig, threads: int = 1) -> dict:
    """Run all weighting methods over ``config.reps`` simulated datasets."""
    beta = gen_beta(config.J, config.h, config.snr)
    reps = range(config.reps)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _one_rep(config, beta, r), reps))
    else:
        results = [_one_rep(config, beta, r) for r in reps]
    rows = [row for r, _, _ in results for row in r]
    return {
        "experiment": "regression",
        "config": asdict(config),
        "beta": beta.tolist(),
        "summary": summarize(rows, REG_METHODS),
        "rows": rows,
        "model_rows": [row for _, m, _ in results for row in m],
        "weights": [w for _, _, w in results],
    }
