"""Diagonal-covariance Gaussian mixture."""

import math
from dataclasses import dataclass, field

import numpy as np

from ..descriptors import as_array, stack_bags
from ..numerics import log_sum_exp
from .base import EmConfig, MixtureError, converged, kmeans_pp, safe_log, variance_floor

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DiagonalGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    history: tuple = field(default=(), compare=False, repr=False)

    kind = "gmm"

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def D(self):
        return self.means.shape[1]

    def log_joint(self, x):
        """``log w_k + log G(x_i; mu_k, sigma_k^2)`` as an ``(n, K)`` array."""
        x = as_array(x)
        if x.shape[1] != self.D:
            raise ValueError(f"model dimension {self.D} does not match descriptors {x.shape[1]}")
        quad = np.empty((x.shape[0], self.K))
        for k in range(self.K):
            diff = x - self.means[k]
            quad[:, k] = (diff * diff) @ (1.0 / self.variances[k])
        logdet = np.sum(np.log(self.variances), axis=1)
        return safe_log(self.weights)[None, :] - 0.5 * (self.D * _LOG_2PI + logdet[None, :] + quad)


def gmm_posteriors_loglik(m, bag):
    """Responsibilities ``p(k | x_i)`` and total log-likelihood of the bag."""
    lj = m.log_joint(bag)
    norm = log_sum_exp(lj, axis=1)
    resp = np.exp(lj - norm[:, None])
    return resp, float(np.sum(norm))


def _m_step(x, resp, old, floor):
    nk = resp.sum(axis=0)
    n = x.shape[0]
    weights = nk / n
    means = old.means.copy()
    variances = old.variances.copy()
    alive = nk > 1e-12 * n
    means[alive] = (resp[:, alive].T @ x) / nk[alive, None]
    for k in np.flatnonzero(alive):
        diff = x - means[k]
        variances[k] = resp[:, k] @ (diff * diff) / nk[k]
    variances = np.maximum(variances, floor)
    return DiagonalGmm(weights, means, variances)


def fit_gmm_em(bags, K, config=None):
    """Maximum-likelihood diagonal GMM by EM, seeded with k-means++."""
    cfg = config or EmConfig()
    x = stack_bags(bags)
    n, d = x.shape
    if K < 1 or K > n:
        raise MixtureError(f"K={K} needs between 1 and {n} samples")
    floor = variance_floor(x, cfg)
    rng = np.random.default_rng(cfg.seed)
    centers, _ = kmeans_pp(x, K, rng, cfg.kmeans_iter)
    init_var = np.maximum(np.var(x, axis=0), floor)
    model = DiagonalGmm(np.full(K, 1.0 / K), centers, np.tile(init_var, (K, 1)))
    resp, ll = gmm_posteriors_loglik(model, x)
    history = [ll]
    for _ in range(cfg.max_iter):
        model = _m_step(x, resp, model, floor)
        resp, ll = gmm_posteriors_loglik(model, x)
        if not np.isfinite(ll):
            raise MixtureError("GMM log-likelihood became non-finite")
        history.append(ll)
        if converged(history, cfg.tol):
            break
    return DiagonalGmm(model.weights, model.means, model.variances, tuple(history))
