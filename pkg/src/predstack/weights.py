"""Combination weights for a list of models and the combined predictive density.

All weight vectors are ordered like the model list they were computed from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .core import WeightVector, MissingLogMarginal, MissingPredMean, check_simplex

DEFAULT_BB_SAMPLES = 1000
MIN_BB_SAMPLES = 100
MAX_ITER = 100_000
IMPROVE_TOL = 1e-10
KKT_TOL = 1e-6

METHODS = (
    "stacking",
    "stack-means",
    "pseudo-bma",
    "pseudo-bma-lognormal",
    "pseudo-bma-plus",
    "bma",
    "select-loo",
    "select-marginal",
)


class NonFinite(ValueError):
    pass


@dataclass
class StackingSolution:
    weights: WeightVector
    objective: float
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def _as_weights(w) -> WeightVector:
    w = np.clip(np.asarray(w, dtype=float), 0.0, None)
    return WeightVector(w / w.sum())


def _stable_softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return softmax(x - np.max(x))


# ---------------------------------------------------------------------------
# Stacking of predictive distributions
# ---------------------------------------------------------------------------


class _LogScoreProblem:
    """f(w) = mean_i log sum_k w_k P_ik with P_ik = exp(lpd_ik - max_k lpd_ik)."""

    def __init__(self, loo_lpd: np.ndarray):
        self.c = loo_lpd.max(axis=1)
        self.P = np.exp(loo_lpd - self.c[:, None])
        self.n = loo_lpd.shape[0]

    def value(self, w) -> float:
        mix = self.P @ w
        with np.errstate(divide="ignore"):
            return float(np.mean(np.log(mix)))

    def value_grad(self, w):
        mix = self.P @ w
        with np.errstate(divide="ignore"):
            f = float(np.mean(np.log(mix)))
        g = (self.P / mix[:, None]).mean(axis=0)
        return f, g, mix

    def hessian(self, w, mix, idx):
        Q = self.P[:, idx] / mix[:, None]
        return -(Q.T @ Q) / self.n


def kkt_residual(g: np.ndarray, w: np.ndarray) -> float:
    lam = float(w @ g)
    return float(max(np.max(w * np.abs(g - lam)), np.max(np.maximum(g - lam, 0.0))))


def _eg_ascent(prob, w, max_iter, step=1.0):
    """Exponentiated-gradient ascent with backtracking; stops near stationarity."""
    f, g, _ = prob.value_grad(w)
    it = 0
    improvement = np.inf
    while it < max_iter:
        it += 1
        for _ in range(60):
            with np.errstate(divide="ignore"):
                z = np.log(w) + step * (g - g.max())
            w_new = np.exp(z - logsumexp(z))
            f_new = prob.value(w_new)
            if f_new >= f + 0.1 * float(g @ (w_new - w)):
                break
            step *= 0.5
        else:
            break
        improvement = f_new - f
        w = w_new
        f, g, _ = prob.value_grad(w)
        step = min(step * 2.0, 1e8)
        if improvement < IMPROVE_TOL and kkt_residual(g, w) < KKT_TOL:
            break
        # hand over to the Newton polish once roughly stationary
        if kkt_residual(g, w) < 1e-4 and improvement < 1e-8:
            break
    return w, it, improvement


def _newton_polish(prob, w, max_iter=200):
    """Active-set projected Newton on the face spanned by the current support."""
    w = w.copy()
    support = w > 0
    it = 0
    for it in range(1, max_iter + 1):
        f, g, mix = prob.value_grad(w)
        idx = np.flatnonzero(support)
        m = idx.size
        if m == 1:
            break
        H = prob.hessian(w, mix, idx)
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = H
        kkt[:m, m] = -1.0
        kkt[m, :m] = 1.0
        rhs = np.concatenate([-g[idx], [0.0]])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        d = sol[:m]
        d -= d.mean()  # keep the step on the face exactly
        gain = float(g[idx] @ d)
        if gain <= 1e-15 or np.max(np.abs(d)) < 1e-14:
            break
        neg = d < 0
        alpha_max = min(1.0, float(np.min(-w[idx][neg] / d[neg]))) if neg.any() else 1.0
        alpha = alpha_max
        accepted = False
        for _ in range(50):
            w_try = w.copy()
            w_try[idx] = np.maximum(w[idx] + alpha * d, 0.0)
            if alpha == alpha_max and alpha_max < 1.0:
                hit = idx[neg][np.argmin(-w[idx][neg] / d[neg])]
                w_try[hit] = 0.0
            w_try /= w_try.sum()
            f_try = prob.value(w_try)
            if np.isfinite(f_try) and f_try >= f + 1e-4 * alpha * gain - 1e-15:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        w = w_try
        support = w > 0
    return w, it


def _solve_from(prob, w0, budget):
    w = w0.copy()
    used = 0
    improvement = np.inf
    while used < budget:
        w, it, improvement = _eg_ascent(prob, w, budget - used)
        used += it
        w_pol, nit = _newton_polish(prob, w)
        used += nit
        if prob.value(w_pol) >= prob.value(w) - 1e-14:
            improvement = max(prob.value(w_pol) - prob.value(w), 0.0)
            w = w_pol
        f, g, _ = prob.value_grad(w)
        if kkt_residual(g, w) < KKT_TOL:
            return w, used, True
        # a dropped component wants back in: revive zeros and keep climbing
        w = np.where(w > 0, w, 1e-6)
        w /= w.sum()
    f, g, _ = prob.value_grad(w)
    return w, used, kkt_residual(g, w) < KKT_TOL and improvement < IMPROVE_TOL


def stack_logscore(loo_lpd, init=None, bb_samples: int = DEFAULT_BB_SAMPLES,
                   seed: int = 0) -> StackingSolution:
    """Stacking of predictive distributions under the log score.

    Maximizes ``(1/n) sum_i log sum_k w_k exp(loo_lpd[i, k])`` over the
    simplex.  Exponentiated-gradient ascent (warm-started at Pseudo-BMA+
    weights unless ``init`` is given) is followed by an active-set Newton
    polish, so weights that should be zero come out exactly zero.

    Parameters
    ----------
    loo_lpd : array_like, shape ``(n, K)``
        Leave-one-out log predictive densities.
    init : array_like, optional
        Starting weights; zero entries are lifted to 1e-6 before starting.
    bb_samples, seed
        Bayesian-bootstrap settings for the default warm start.

    Returns
    -------
    StackingSolution
    """
    lpd = np.atleast_2d(np.asarray(loo_lpd, dtype=float))
    if not np.all(np.isfinite(lpd)):
        raise NonFinite("loo_lpd contains non-finite values")
    n, K = lpd.shape
    prob = _LogScoreProblem(lpd)
    shift = float(np.mean(prob.c))
    if K == 1:
        w = np.ones(1)
        return StackingSolution(WeightVector(w), prob.value(w) + shift, 0, True)

    if init is None:
        init = pseudo_bma_plus(lpd, B=bb_samples, seed=seed).w
    w0 = np.maximum(np.asarray(init, dtype=float), 1e-6)
    w0 /= w0.sum()

    w, iters, converged = _solve_from(prob, w0, MAX_ITER)
    if not converged:
        w_u, it_u, converged = _solve_from(prob, np.full(K, 1.0 / K), MAX_ITER)
        iters += it_u
        if prob.value(w_u) >= prob.value(w):
            w = w_u

    # never return something worse than a vertex or the uniform point
    candidates = [np.full(K, 1.0 / K), w0] + [np.eye(K)[k] for k in range(K)]
    for c in candidates:
        if prob.value(c) > prob.value(w):
            w = c
    f, g, _ = prob.value_grad(w)
    return StackingSolution(
        weights=_as_weights(w),
        objective=f + shift,
        iterations=iters,
        converged=bool(converged),
        diagnostics={"kkt_residual": kkt_residual(g, w)},
    )


def stacking_objective(loo_lpd, w) -> float:
    lpd = np.atleast_2d(np.asarray(loo_lpd, dtype=float))
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore"):
        return float(np.mean(logsumexp(lpd, b=w[None, :], axis=1)))


# ---------------------------------------------------------------------------
# Stacking of means
# ---------------------------------------------------------------------------


def _simplex_constraints(K):
    return [{"type": "eq", "fun": lambda w: np.sum(w) - 1.0, "jac": lambda w: np.ones(K)}]


def stack_means(loo_mean, y) -> StackingSolution:
    """Least-squares stacking of LOO point predictions on the simplex.

    The minimizer is usually not unique (e.g. when several models have the
    same LOO means); among all minimizers the one with the smallest
    Euclidean norm is returned.
    """
    if loo_mean is None:
        raise MissingPredMean("stacking of means needs LOO predictive means")
    M = np.atleast_2d(np.asarray(loo_mean, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(y))):
        raise NonFinite("loo_mean / y contain non-finite values")
    n, K = M.shape
    if y.size != n:
        raise ValueError(f"y has {y.size} entries, loo_mean has {n} rows")
    if K == 1:
        return StackingSolution(WeightVector(np.ones(1)),
                                float(np.mean((y - M[:, 0]) ** 2)), 0, True)

    scale = max(float(np.mean(y ** 2)), 1e-300)

    def sse(w):
        r = y - M @ w
        return float(r @ r) / (n * scale)

    def sse_jac(w):
        return -2.0 * (M.T @ (y - M @ w)) / (n * scale)

    cons = _simplex_constraints(K)
    bounds = [(0.0, 1.0)] * K
    best = None
    for start in (np.full(K, 1.0 / K), *np.eye(K)):
        res = minimize(sse, start, jac=sse_jac, bounds=bounds, constraints=cons,
                       method="SLSQP", options={"ftol": 1e-16, "maxiter": 1000})
        if best is None or res.fun < best.fun:
            best = res
    w_star = np.clip(best.x, 0.0, None)
    w_star /= w_star.sum()
    it1 = best.nit

    # the fitted vector M w is unique; hold it fixed and minimize ||w||
    _, s, Vt = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(n, K) * 1e-12)) if s[0] > 0 else 0
    C = np.vstack([Vt[:rank], np.ones((1, K))])
    d = C @ w_star
    d[-1] = 1.0
    Uc, sc, Wt = np.linalg.svd(C, full_matrices=False)
    keep = sc > sc[0] * 1e-10
    E = Wt[keep]
    e = (Uc[:, keep].T @ d) / sc[keep]
    res2 = minimize(
        lambda w: float(w @ w), w_star, jac=lambda w: 2.0 * w, bounds=bounds,
        constraints=[{"type": "eq", "fun": lambda w: E @ w - e, "jac": lambda w: E}],
        method="SLSQP", options={"ftol": 1e-16, "maxiter": 1000},
    )
    w = np.clip(res2.x, 0.0, None)
    w /= w.sum()
    if sse(w) > sse(w_star) + 1e-12:
        w = w_star
    return StackingSolution(
        weights=_as_weights(w),
        objective=float(np.mean((y - M @ w) ** 2)),
        iterations=int(it1 + res2.nit),
        converged=bool(best.success and res2.success),
    )


# ---------------------------------------------------------------------------
# Pseudo-BMA family, BMA, selection
# ---------------------------------------------------------------------------


def pseudo_bma(elpd) -> WeightVector:
    """Softmax of the per-model elpd_loo totals."""
    elpd = np.asarray(elpd, dtype=float)
    if not np.all(np.isfinite(elpd)):
        raise NonFinite("elpd contains non-finite values")
    return _as_weights(_stable_softmax(elpd))


def pseudo_bma_lognormal(elpd, se) -> WeightVector:
    """Softmax of ``elpd_k - se_k / 2``.

    ``se`` enters unsquared.
    """
    se = np.asarray(se, dtype=float)
    if np.any(se < 0):
        raise ValueError("standard errors must be nonnegative")
    return pseudo_bma(np.asarray(elpd, dtype=float) - 0.5 * se)


def pseudo_bma_plus(loo_lpd, B: int = DEFAULT_BB_SAMPLES, seed: int = 0) -> WeightVector:
    """Pseudo-BMA weights averaged over Bayesian-bootstrap replicates.

    Each replicate draws Dirichlet(1, ..., 1) point probabilities (as
    normalized Exp(1) variates), forms the weighted mean of each model's
    pointwise elpd, and takes ``softmax(n * mean)``.
    """
    z = np.atleast_2d(np.asarray(loo_lpd, dtype=float))
    if not np.all(np.isfinite(z)):
        raise NonFinite("loo_lpd contains non-finite values")
    if B < MIN_BB_SAMPLES:
        raise ValueError(f"B must be at least {MIN_BB_SAMPLES}")
    n, K = z.shape
    rng = np.random.default_rng(seed)
    e = rng.exponential(size=(B, n))
    alpha = e / e.sum(axis=1, keepdims=True)
    zbar = n * (alpha @ z)
    zbar -= zbar.max(axis=1, keepdims=True)
    wb = np.exp(zbar)
    wb /= wb.sum(axis=1, keepdims=True)
    return _as_weights(wb.mean(axis=0))


def bma(log_marginal, prior=None, model_ids=None) -> WeightVector:
    """Posterior model probabilities from log marginal likelihoods."""
    if log_marginal is None:
        raise MissingLogMarginal(model_ids or [])
    lm = np.array([np.nan if v is None else v for v in log_marginal], dtype=float)
    if np.any(np.isnan(lm)):
        ids = model_ids or [str(k) for k in range(lm.size)]
        raise MissingLogMarginal([ids[k] for k in np.flatnonzero(np.isnan(lm))])
    if prior is None:
        prior = np.full(lm.size, 1.0 / lm.size)
    prior = check_simplex(prior, "prior")
    with np.errstate(divide="ignore"):
        return _as_weights(_stable_softmax(lm + np.log(prior)))


def select_best(scores, criterion: str = "loo") -> WeightVector:
    """One-hot weights on the best score; ties go to the lowest index."""
    if criterion not in ("loo", "marginal"):
        raise ValueError(f"unknown criterion {criterion!r}")
    scores = np.asarray(scores, dtype=float)
    w = np.zeros(scores.size)
    w[int(np.argmax(scores))] = 1.0
    return WeightVector(w)


def combine_predictive(weights, component_log_densities) -> np.ndarray:
    """log sum_k w_k p_k at each of m points; zero-weight columns are skipped."""
    w = np.asarray(weights, dtype=float)
    lp = np.atleast_2d(np.asarray(component_log_densities, dtype=float))
    if lp.shape[1] != w.size:
        raise ValueError(f"expected {w.size} columns, got {lp.shape[1]}")
    keep = w > 0
    return logsumexp(lp[:, keep] + np.log(w[keep])[None, :], axis=1)


def entropy(w) -> float:
    w = np.asarray(w, dtype=float)
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))
