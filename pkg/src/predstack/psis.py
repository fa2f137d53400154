"""Pareto-smoothed importance sampling for leave-one-out predictive densities.

For each model k and point i the raw importance ratios are
``r^s = 1 / p(y_i | theta^s)``.  The largest 20% are replaced by expected
order statistics of a generalized Pareto fit, capped at the largest raw
ratio, and the LOO density is the self-normalized weighted average of
``p(y_i | theta^s)``.  All arithmetic is in log space.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import ElpdSummary, Manifest, MissingPredMean

TAIL_FRACTION = 0.2
MIN_TAIL = 5
MIN_DRAWS = 25
GPD_GRID = 200
KHAT_WARN = 0.7
UNRELIABLE_KHAT = math.inf


class TailTooSmall(ValueError):
    pass


class DegenerateTail(ValueError):
    pass


@dataclass(frozen=True)
class ParetoFit:
    k_hat: float
    sigma: float
    tail_size: int


@dataclass
class SmoothedRatios:
    log_w: np.ndarray
    k_hat: float
    raw_log_r: np.ndarray


@dataclass
class LooResult:
    loo_lpd: np.ndarray
    k_hat: np.ndarray
    elpd: list
    loo_mean: Optional[np.ndarray] = None
    model_ids: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    sample_size_warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.loo_lpd.shape[0]

    @property
    def K(self) -> int:
        return self.loo_lpd.shape[1]

    def elpd_totals(self) -> np.ndarray:
        return np.array([e.total for e in self.elpd])

    def elpd_se(self) -> np.ndarray:
        return np.array([e.se for e in self.elpd])


def fit_gpd(tail) -> ParetoFit:
    """Fit a generalized Pareto distribution to threshold exceedances.

    Uses the Zhang & Stephens (2009) profile-likelihood estimator: the
    posterior mean of ``theta = -k / sigma`` is taken over a fixed grid of
    ``GPD_GRID`` points, then ``k`` is shrunk towards 0.5 with a weakly
    informative prior worth 10 observations.

    Parameters
    ----------
    tail : array_like, shape ``(M,)``
        Nonnegative exceedances over the threshold, sorted ascending.

    Returns
    -------
    ParetoFit
        Shape ``k_hat`` (positive means a heavy tail) and scale ``sigma``.
    """
    x = np.sort(np.asarray(tail, dtype=float))
    m = x.size
    if m < MIN_TAIL:
        raise TailTooSmall(f"need at least {MIN_TAIL} exceedances, got {m}")
    if not np.all(np.isfinite(x)) or x[0] < 0:
        raise ValueError("exceedances must be finite and nonnegative")
    if x[-1] <= 0 or np.ptp(x) <= 1e-12 * x[-1]:
        raise DegenerateTail("tail has zero variance")

    prior = 3.0
    jj = np.arange(1, GPD_GRID + 1)
    x_quart = x[int(m / 4 + 0.5) - 1]
    if x_quart <= 0:
        x_quart = x[x > 0][0]
    theta = 1.0 / x[-1] + (1.0 - np.sqrt(GPD_GRID / (jj - 0.5))) / (prior * x_quart)
    # profile log-likelihood at each grid point
    k_grid = np.mean(np.log1p(-np.outer(theta, x)), axis=1)
    # -theta/k -> 1/mean(x) as theta -> 0 (exponential limit)
    flat = k_grid == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(flat, 1.0 / np.mean(x), -theta / np.where(flat, 1.0, k_grid))
    l_theta = m * (np.log(ratio) - k_grid - 1.0)
    w_theta = np.exp(l_theta - logsumexp(l_theta))
    theta_hat = float(np.sum(theta * w_theta))
    k = float(np.mean(np.log1p(-theta_hat * x)))
    sigma = -k / theta_hat
    # weakly informative prior on k
    a = 10.0
    k = (k * m + a * 0.5) / (m + a)
    return ParetoFit(k_hat=float(k), sigma=float(sigma), tail_size=m)


def gpd_quantile(p, k: float, sigma: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if abs(k) < 1e-12:
        return -sigma * np.log1p(-p)
    return sigma * np.expm1(-k * np.log1p(-p)) / k


def tail_size(S: int) -> int:
    return int(math.ceil(TAIL_FRACTION * S))


def smooth_ratios(log_r) -> SmoothedRatios:
    """Pareto-smooth one vector of log importance ratios.

    The M = ceil(0.2 S) largest ratios are replaced, in rank order, by the
    GPD quantiles at ``(z - 0.5) / M`` above the threshold and capped at the
    raw maximum.  Too few draws or a degenerate tail leaves the raw ratios in
    place; the returned ``k_hat`` is then the fit attempt, 0 for constant
    ratios, or ``inf`` when no fit was possible.
    """
    log_r = np.asarray(log_r, dtype=float)
    S = log_r.size
    raw = log_r.copy()
    if S == 0:
        raise ValueError("need at least one draw")
    lr_max = float(np.max(log_r))
    if np.all(log_r == lr_max):
        return SmoothedRatios(raw.copy(), 0.0, raw)

    M = tail_size(S)
    order = np.argsort(log_r, kind="stable")
    r = np.exp(log_r - lr_max)
    thresh_idx = order[S - M - 1] if S - M - 1 >= 0 else None
    fit = None
    if thresh_idx is not None and M >= MIN_TAIL:
        tail_idx = order[S - M:]
        exceed = r[tail_idx] - r[thresh_idx]
        try:
            fit = fit_gpd(exceed)
        except DegenerateTail:
            return SmoothedRatios(raw.copy(), 0.0, raw)
    if fit is None or S < MIN_DRAWS:
        k_hat = fit.k_hat if fit is not None else UNRELIABLE_KHAT
        return SmoothedRatios(raw.copy(), k_hat, raw)

    p = (np.arange(1, M + 1) - 0.5) / M
    q = r[thresh_idx] + gpd_quantile(p, fit.k_hat, fit.sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        smoothed = np.log(q) + lr_max
    smoothed = np.where(np.isfinite(smoothed), smoothed, lr_max)
    log_w = raw.copy()
    log_w[order[S - M:]] = np.minimum(smoothed, lr_max)
    return SmoothedRatios(log_w, fit.k_hat, raw)


def loo_lpd_point(loglik_col) -> tuple:
    """PSIS-LOO ``(lpd, k_hat)`` of one point under one model."""
    lpd, k_hat, _ = _loo_point(loglik_col)
    return lpd, k_hat


def _loo_point(loglik_col):
    ll = np.asarray(loglik_col, dtype=float)
    if ll.size == 1:
        return float(ll[0]), 0.0, None
    sm = smooth_ratios(-ll)
    lpd = logsumexp(sm.log_w + ll) - logsumexp(sm.log_w)
    return float(lpd), float(sm.k_hat), sm.log_w


def loo_mean_point(pred_mean_col, log_w) -> float:
    """Self-normalized importance estimate of the LOO predictive mean."""
    m = np.asarray(pred_mean_col, dtype=float)
    if log_w is None or m.size == 1:
        return float(m[0]) if m.size == 1 else float(np.mean(m))
    lw = np.asarray(log_w, dtype=float)
    w = np.exp(lw - lw.max())
    return float(np.sum(w * m) / np.sum(w))


def _lpd_full(loglik: np.ndarray) -> np.ndarray:
    return logsumexp(loglik, axis=0) - math.log(loglik.shape[0])


def elpd_summary(pointwise, lpd_full_total: float = float("nan")) -> ElpdSummary:
    z = np.asarray(pointwise, dtype=float)
    total = float(np.sum(z))
    # sqrt(sum_i (z_i - total/n)^2): no 1/n or sqrt(n) factor
    se = float(np.sqrt(np.sum((z - total / z.size) ** 2)))
    return ElpdSummary(total=total, pointwise=z.copy(), se=se,
                       p_loo=float(lpd_full_total - total))


def _model_cells(loglik: np.ndarray, pred_mean: Optional[np.ndarray]):
    S, n = loglik.shape
    lpd = np.empty(n)
    kh = np.empty(n)
    mu = np.empty(n) if pred_mean is not None else None
    for i in range(n):
        lpd[i], kh[i], lw = _loo_point(loglik[:, i])
        if mu is not None:
            mu[i] = loo_mean_point(pred_mean[:, i], lw)
    return lpd, kh, mu


def loo_all(manifest: Manifest, threads: int = 1) -> LooResult:
    """PSIS-LOO for every (point, model) cell of a validated manifest.

    Cells are independent; with ``threads > 1`` models are processed
    concurrently but written into preallocated slots, so the result does not
    depend on the thread count.
    """
    models = manifest.models
    K = len(models)
    n = models[0].n
    have_means = all(m.pred_mean is not None for m in models)
    loo_lpd = np.empty((n, K))
    k_hat = np.empty((n, K))
    loo_mean = np.empty((n, K)) if have_means else None

    def run(k):
        m = models[k]
        return k, _model_cells(m.loglik, m.pred_mean if have_means else None)

    if threads > 1 and K > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(K)))
    else:
        results = [run(k) for k in range(K)]
    for k, (lpd, kh, mu) in results:
        loo_lpd[:, k] = lpd
        k_hat[:, k] = kh
        if loo_mean is not None:
            loo_mean[:, k] = mu

    elpd = [
        elpd_summary(loo_lpd[:, k], float(np.sum(_lpd_full(models[k].loglik))))
        for k in range(K)
    ]
    warns = [
        {"i": int(i), "k": int(k), "k_hat": float(k_hat[i, k])}
        for i, k in zip(*np.nonzero(k_hat > KHAT_WARN))
    ]
    small = [
        {"k": k, "model": models[k].model_id, "n": n, "p_loo": e.p_loo}
        for k, e in enumerate(elpd)
        if n < 5 * e.p_loo
    ]
    return LooResult(
        loo_lpd=loo_lpd,
        k_hat=k_hat,
        elpd=elpd,
        loo_mean=loo_mean,
        model_ids=[m.model_id for m in models],
        warnings=warns,
        sample_size_warnings=small,
    )


def require_loo_mean(result: LooResult) -> np.ndarray:
    if result.loo_mean is None:
        raise MissingPredMean("stacking of means needs pred_mean for every model")
    return result.loo_mean
