"""Bayesian linear regression without intercept: Gibbs + slice sampler.

Prior: ``beta_j ~ N(0, 10)`` (variance 10) independently and
``sigma ~ Gamma(0.1, 0.1)`` on the noise scale itself (shape, rate).  The
gamma prior on sigma is not conjugate, so sigma is updated by a univariate
slice step on ``log sigma``; beta is drawn from its normal full conditional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from ..core import ModelDrawMatrix

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LinRegPrior:
    beta_var: float = 10.0
    sigma_shape: float = 0.1
    sigma_rate: float = 0.1


@dataclass
class LinRegFit:
    beta: np.ndarray       # (S, p)
    sigma: np.ndarray      # (S,)
    loglik: np.ndarray     # (S, n) on the training data
    pred_mean: np.ndarray  # (S, n)

    @property
    def S(self) -> int:
        return self.sigma.size

    def draw_matrix(self, model_id: str, log_marginal=None) -> ModelDrawMatrix:
        return ModelDrawMatrix(model_id, self.loglik, self.pred_mean, log_marginal)

    def predictive_logpdf(self, X_new, y_new) -> np.ndarray:
        """log (1/S) sum_s N(y | x beta^s, sigma_s^2) for each new point."""
        mu = np.atleast_2d(X_new) @ self.beta.T           # (m, S)
        ll = normal_logpdf(np.asarray(y_new)[:, None], mu, self.sigma[None, :])
        return logsumexp(ll, axis=1) - math.log(self.S)

    def predictive_mean(self, X_new) -> np.ndarray:
        return np.atleast_2d(X_new) @ self.beta.mean(axis=0)


def normal_logpdf(y, mu, sd):
    z = (y - mu) / sd
    return -0.5 * LOG_2PI - np.log(sd) - 0.5 * z * z


def _log_sigma_target(u, n, rss, a, b):
    # log p(sigma | beta, y) in u = log sigma, including the Jacobian
    return (a - n) * u - 0.5 * rss * math.exp(-2.0 * u) - b * math.exp(u)


def _slice_step(u0, logf, rng, width=1.0, max_steps=64):
    """One stepping-out + shrinkage slice update (Neal 2003)."""
    log_y = logf(u0) + math.log(rng.random())
    left = u0 - width * rng.random()
    right = left + width
    j = int(max_steps * rng.random())
    k = max_steps - 1 - j
    while j > 0 and logf(left) > log_y:
        left -= width
        j -= 1
    while k > 0 and logf(right) > log_y:
        right += width
        k -= 1
    while True:
        u1 = left + (right - left) * rng.random()
        if logf(u1) > log_y:
            return u1
        if u1 < u0:
            left = u1
        else:
            right = u1


def fit_linreg_mcmc(X, y, prior: LinRegPrior = LinRegPrior(), S: int = 1000,
                    seed=0) -> LinRegFit:
    """Sample the posterior of ``y ~ N(X beta, sigma^2)``.

    Runs ``S // 2`` burn-in iterations and keeps the next ``S``.  ``seed``
    may be anything accepted by :func:`numpy.random.default_rng`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("need at least two observations")
    return _run_chain(X, y, prior, S, seed)


def _run_chain(X, y, prior, S, seed) -> LinRegFit:
    n, p = X.shape
    if y.size != n:
        raise ValueError("X and y disagree on n")
    rng = np.random.default_rng(seed)
    XtX = X.T @ X
    Xty = X.T @ y
    prior_prec = np.eye(p) / prior.beta_var
    a, b = prior.sigma_shape, prior.sigma_rate

    beta = np.linalg.solve(XtX + prior_prec, Xty)
    resid = y - X @ beta
    u = math.log(max(math.sqrt(float(resid @ resid) / n), 1e-3))

    burn = S // 2
    betas = np.empty((S, p))
    sigmas = np.empty(S)
    for t in range(burn + S):
        s2 = math.exp(2.0 * u)
        A = XtX / s2 + prior_prec
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError("posterior precision of beta is not positive definite") from None
        mean = np.linalg.solve(A, Xty / s2)
        beta = mean + np.linalg.solve(L.T, rng.standard_normal(p))
        resid = y - X @ beta
        rss = float(resid @ resid)
        u = _slice_step(u, lambda v: _log_sigma_target(v, n, rss, a, b), rng)
        if t >= burn:
            betas[t - burn] = beta
            sigmas[t - burn] = math.exp(u)

    mu = betas @ X.T                                  # (S, n)
    loglik = normal_logpdf(y[None, :], mu, sigmas[:, None])
    return LinRegFit(beta=betas, sigma=sigmas, loglik=loglik, pred_mean=mu)


def log_marginal_likelihood(X, y, prior: LinRegPrior = LinRegPrior(),
                            grid_points: int = 40001, span=(-10.0, 10.0)) -> float:
    """log p(y | M) with beta integrated analytically and sigma numerically.

    Given sigma, ``y ~ N(0, sigma^2 I + v X X^T)``; its determinant and
    quadratic form reduce to the eigenvalues of ``X^T X``.  The remaining
    one-dimensional integral over ``log sigma`` uses the trapezoid rule.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    v = prior.beta_var
    lam, V = np.linalg.eigh(X.T @ X)
    lam = np.clip(lam, 0.0, None)
    bvec = V.T @ (X.T @ y)
    yy = float(y @ y)

    u = np.linspace(span[0], span[1], grid_points)
    s2 = np.exp(2.0 * u)[:, None]
    logdet = (n - p) * np.log(s2[:, 0]) + np.sum(np.log(s2 + v * lam[None, :]), axis=1)
    quad = (yy - np.sum(bvec[None, :] ** 2 / (s2 / v + lam[None, :]), axis=1)) / s2[:, 0]
    loglik = -0.5 * n * LOG_2PI - 0.5 * logdet - 0.5 * quad
    a, b = prior.sigma_shape, prior.sigma_rate
    sigma = np.exp(u)
    logprior = a * math.log(b) - gammaln(a) + (a - 1.0) * u - b * sigma
    integrand = loglik + logprior + u
    h = u[1] - u[0]
    wts = np.full(u.size, math.log(h))
    wts[[0, -1]] += math.log(0.5)
    return float(logsumexp(integrand + wts))


def exact_loo_oracle(X, y, prior: LinRegPrior = LinRegPrior(), S: int = 1000,
                     seed: int = 0, points=None) -> np.ndarray:
    """Brute-force LOO: refit without point i and average its likelihood.

    Returns ``log p(y_i | y_-i)`` for every point (or only ``points``);
    entries not requested are NaN.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    out = np.full(n, np.nan)
    for i in (range(n) if points is None else points):
        keep = np.arange(n) != i
        fit = _run_chain(X[keep], y[keep], prior, S, [seed, i])
        out[i] = fit.predictive_logpdf(X[i:i + 1], y[i:i + 1])[0]
    return out
