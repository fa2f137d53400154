"""Brute-force reference computations used to check the optimizers."""

from __future__ import annotations

import itertools

import numpy as np

from ..weights import stacking_objective


def simplex_lattice(K: int, step: float) -> np.ndarray:
    """All points of the simplex lattice with spacing ``step`` (rows sum to 1)."""
    m = int(round(1.0 / step))
    if abs(m * step - 1.0) > 1e-9:
        raise ValueError("1/step must be an integer")
    if K == 1:
        return np.ones((1, 1))
    pts = []
    for head in itertools.product(range(m + 1), repeat=K - 1):
        s = sum(head)
        if s <= m:
            pts.append(head + (m - s,))
    return np.asarray(pts, dtype=float) / m


def grid_weight_oracle(loo_lpd, step: float = 0.01):
    """Exhaustive search for the best stacking weights on a simplex lattice.

    Returns ``(w_star, objective_star)``.  Only for K <= 4.
    """
    lpd = np.atleast_2d(np.asarray(loo_lpd, dtype=float))
    K = lpd.shape[1]
    if K > 4:
        raise ValueError("grid oracle is limited to K <= 4")
    W = simplex_lattice(K, step)
    c = lpd.max(axis=1, keepdims=True)
    P = np.exp(lpd - c)
    best_j, best_v = 0, -np.inf
    for start in range(0, W.shape[0], 20000):
        chunk = W[start:start + 20000]
        with np.errstate(divide="ignore"):
            vals = np.log(P @ chunk.T).mean(axis=0)
        j = int(np.argmax(vals))
        if vals[j] > best_v:
            best_j, best_v = start + j, float(vals[j])
    w = W[best_j]
    return w, stacking_objective(lpd, w)


def gm_expected_bma_weights(n: int, mu_true: float = 3.4, model_means=None) -> np.ndarray:
    """Normalized exp(-n (mu_k - mu)^2 / 4): the GM closed-form BMA weight law."""
    mk = np.arange(1, 9, dtype=float) if model_means is None else np.asarray(model_means, float)
    lw = -n * (mk - mu_true) ** 2 / 4.0
    w = np.exp(lw - lw.max())
    return w / w.sum()
