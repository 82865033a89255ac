"""Dirichlet mixture over semantic multinomials."""

from dataclasses import dataclass, field

import numpy as np

from ..descriptors import DEFAULT_EPSILON, as_array, check_simplex, stack_bags
from ..numerics import digamma, log_gamma, log_sum_exp, trigamma
from .base import EmConfig, MixtureError, converged, kmeans_pp, safe_log


@dataclass(frozen=True)
class DirichletMixture:
    weights: np.ndarray
    alphas: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    history: tuple = field(default=(), compare=False, repr=False)

    kind = "dmm"

    @property
    def K(self):
        return self.alphas.shape[0]

    @property
    def S(self):
        return self.alphas.shape[1]

    D = S

    def log_norm(self):
        """``log Z(alpha_k)`` with Z = Gamma(sum alpha) / prod Gamma(alpha)."""
        return log_gamma(self.alphas.sum(axis=1)) - np.sum(log_gamma(self.alphas), axis=1)

    def log_joint(self, bag):
        logp = log_simplex(bag, self.epsilon)
        if logp.shape[1] != self.S:
            raise ValueError(f"model dimension {self.S} does not match descriptors {logp.shape[1]}")
        return (
            safe_log(self.weights)[None, :]
            + self.log_norm()[None, :]
            + logp @ (self.alphas - 1.0).T
        )

    def centroids(self):
        """Expected log-probabilities ``psi(alpha_k) - psi(sum_l alpha_kl)``."""
        return dirichlet_expected_log(self.alphas)


def dirichlet_expected_log(alphas):
    alphas = np.asarray(alphas, dtype=np.float64)
    return digamma(alphas) - digamma(alphas.sum(axis=-1, keepdims=True))


def log_simplex(bag, epsilon=DEFAULT_EPSILON):
    """Floored log of simplex-valued descriptors; rejects non-simplex input."""
    p = as_array(bag)
    check_simplex(p)
    return np.log(np.maximum(p, epsilon))


def dmm_posteriors_loglik(m, bag):
    lj = m.log_joint(bag)
    norm = log_sum_exp(lj, axis=1)
    return np.exp(lj - norm[:, None]), float(np.sum(norm))


def _component_q(alpha, nk, t):
    """Alpha-dependent part of the expected complete log-likelihood of one component."""
    return nk * (log_gamma(alpha.sum()) - np.sum(log_gamma(alpha))) + np.dot(alpha - 1.0, t)


def newton_alpha(alpha, nk, t, cfg):
    """Maximize ``nk * log Z(alpha) + (alpha - 1).t`` by damped Newton.

    The Hessian is diagonal plus rank one, so each step is O(S)
    (Sherman-Morrison). Steps are halved until the objective does not
    decrease and alpha stays inside ``[alpha_min, alpha_max]``.
    """
    alpha = np.clip(alpha, cfg.alpha_min, cfg.alpha_max)
    q_old = _component_q(alpha, nk, t)
    for _ in range(cfg.newton_iter):
        a0 = alpha.sum()
        grad = nk * (digamma(a0) - digamma(alpha)) + t
        diag = -nk * trigamma(alpha)
        c = nk * trigamma(a0)
        dinv_g = grad / diag
        dinv_1 = 1.0 / diag
        step = dinv_g - dinv_1 * (c * dinv_g.sum()) / (1.0 + c * dinv_1.sum())
        if not np.all(np.isfinite(step)):
            raise MixtureError(f"Dirichlet Newton diverged at alpha={alpha}")
        t_len = 1.0
        accepted = False
        for _ in range(40):
            cand = np.clip(alpha - t_len * step, cfg.alpha_min, cfg.alpha_max)
            q_new = _component_q(cand, nk, t)
            if q_new >= q_old:
                accepted = True
                break
            t_len *= 0.5
        if not accepted:
            break
        moved = np.max(np.abs(cand - alpha) / alpha)
        alpha, q_old = cand, q_new
        if moved < 1e-13:
            break
    if not np.all(np.isfinite(alpha)):
        raise MixtureError("Dirichlet Newton produced non-finite alpha")
    return alpha


def moment_match(p, cfg):
    """Dirichlet parameters matching the first two moments of rows of ``p``."""
    mean = p.mean(axis=0)
    second = np.mean(p * p, axis=0)
    var = second - mean * mean
    ok = (var > 1e-300) & (mean > 0) & (mean < 1)
    if ok.any():
        precision = np.median((mean[ok] * (1 - mean[ok])) / var[ok] - 1.0)
        precision = max(precision, 1e-2)
    else:
        precision = cfg.alpha_max
    return np.clip(precision * np.maximum(mean, cfg.epsilon), cfg.alpha_min, cfg.alpha_max)


def fit_dmm_em(bags, K, config=None):
    """Dirichlet mixture by EM with a damped-Newton M-step for alpha."""
    cfg = config or EmConfig()
    p = stack_bags(bags)
    logp = log_simplex(p, cfg.epsilon)
    n, s = p.shape
    if K < 1 or K > n:
        raise MixtureError(f"K={K} needs between 1 and {n} samples")
    rng = np.random.default_rng(cfg.seed)
    _, labels = kmeans_pp(logp, K, rng, cfg.kmeans_iter)
    weights = np.empty(K)
    alphas = np.empty((K, s))
    for k in range(K):
        members = labels == k
        if not members.any():
            members = np.ones(n, bool)
        weights[k] = members.sum()
        alphas[k] = moment_match(p[members], cfg)
    model = DirichletMixture(weights / weights.sum(), alphas, cfg.epsilon)
    resp, ll = dmm_posteriors_loglik(model, p)
    history = [ll]
    for _ in range(cfg.max_iter):
        nk = resp.sum(axis=0)
        stats = resp.T @ logp
        new_alphas = model.alphas.copy()
        for k in range(K):
            if nk[k] > 1e-12 * n:
                new_alphas[k] = newton_alpha(model.alphas[k], nk[k], stats[k], cfg)
        model = DirichletMixture(nk / n, new_alphas, cfg.epsilon)
        resp, ll = dmm_posteriors_loglik(model, p)
        if not np.isfinite(ll):
            raise MixtureError("DMM log-likelihood became non-finite")
        history.append(ll)
        if converged(history, cfg.tol):
            break
    return DirichletMixture(model.weights, model.alphas, cfg.epsilon, tuple(history))
