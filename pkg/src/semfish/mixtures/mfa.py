"""Mixture of factor analyzers.

Component k is ``G(x; mu_k, S_k)`` with ``S_k = L_k L_k^T + diag(psi)``.
Nothing here forms ``S_k`` densely: inverses use the Woodbury identity with
the R x R core ``(I + L^T psi^-1 L)^-1`` and log-determinants use the
matrix determinant lemma.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..descriptors import as_array, stack_bags
from ..numerics import log_sum_exp
from .base import EmConfig, MixtureError, converged, kmeans_pp, safe_log, variance_floor

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MfaModel:
    """``noise`` is ``(D,)`` when shared across components, else ``(K, D)``."""

    weights: np.ndarray
    means: np.ndarray
    loadings: np.ndarray
    noise: np.ndarray
    history: tuple = field(default=(), compare=False, repr=False)

    kind = "mfa"

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def D(self):
        return self.means.shape[1]

    @property
    def R(self):
        return self.loadings.shape[2]

    @property
    def shared_noise(self):
        return self.noise.ndim == 1

    def component_noise(self):
        return np.broadcast_to(self.noise, (self.K, self.D))

    def covariance(self, k):
        lam = self.loadings[k]
        return lam @ lam.T + np.diag(self.component_noise()[k])


@dataclass(frozen=True)
class MfaDerived:
    """Per-component quantities of the E-step, held in factored form.

    ``core_inv[k] = (I + L^T psi^-1 L)^-1``, ``beta[k] = L^T S^-1`` and
    ``latent_cov[k] = I - beta L`` (posterior covariance of z).
    """

    psi_inv: np.ndarray
    core_inv: np.ndarray
    beta: np.ndarray
    logdet: np.ndarray
    latent_cov: np.ndarray
    loadings: np.ndarray

    def apply_cov_inv(self, k, x):
        """Rows of ``x`` multiplied by ``S_k^-1``."""
        y = x * self.psi_inv[k]
        return y - (x @ self.beta[k].T) @ (self.loadings[k] * self.psi_inv[k][:, None]).T

    def cov_inv(self, k):
        return self.apply_cov_inv(k, np.eye(self.psi_inv.shape[1]))

    def cov_inv_loadings(self, k):
        """``S_k^-1 L_k`` (equal to ``beta_k^T``)."""
        return self.beta[k].T


def mfa_derived(m):
    noise = m.component_noise()
    if np.any(noise <= 0.0):
        raise MixtureError("MFA noise must be strictly positive")
    K, D, R = m.K, m.D, m.R
    psi_inv = 1.0 / noise
    core_inv = np.empty((K, R, R))
    beta = np.empty((K, R, D))
    logdet = np.empty(K)
    latent_cov = np.empty((K, R, R))
    eye = np.eye(R)
    for k in range(K):
        lam = m.loadings[k]
        scaled = lam.T * psi_inv[k]
        core = eye + scaled @ lam
        try:
            chol = np.linalg.cholesky(core)
        except np.linalg.LinAlgError as exc:
            raise MixtureError(f"singular Woodbury core for component {k}") from exc
        ci = np.linalg.inv(core)
        core_inv[k] = 0.5 * (ci + ci.T)
        beta[k] = core_inv[k] @ scaled
        logdet[k] = 2.0 * np.sum(np.log(np.diag(chol))) + np.sum(np.log(noise[k]))
        latent_cov[k] = eye - beta[k] @ lam
    return MfaDerived(psi_inv, core_inv, beta, logdet, latent_cov, np.asarray(m.loadings))


@dataclass(frozen=True)
class MfaEStats:
    """Posterior moments of the factors for every (component, descriptor)."""

    ez: np.ndarray  # (K, n, R): E[z | x_i, k] = beta_k (x_i - mu_k)
    latent_cov: np.ndarray  # (K, R, R): I - beta_k L_k

    @property
    def ezz(self):
        """E[z z^T | x_i, k] as a (K, n, R, R) array."""
        outer = self.ez[..., :, None] * self.ez[..., None, :]
        return outer + self.latent_cov[:, None]


def _log_joint(m, x, derived):
    if x.shape[1] != m.D:
        raise ValueError(f"model dimension {m.D} does not match descriptors {x.shape[1]}")
    n = x.shape[0]
    lj = np.empty((n, m.K))
    logw = safe_log(m.weights)
    for k in range(m.K):
        diff = x - m.means[k]
        quad = np.sum(diff * derived.apply_cov_inv(k, diff), axis=1)
        lj[:, k] = logw[k] - 0.5 * (m.D * _LOG_2PI + derived.logdet[k] + quad)
    return lj


def mfa_posteriors_loglik(m, bag, derived=None):
    """Responsibilities, total log-likelihood and factor posterior moments."""
    x = as_array(bag)
    derived = derived or mfa_derived(m)
    lj = _log_joint(m, x, derived)
    norm = log_sum_exp(lj, axis=1)
    resp = np.exp(lj - norm[:, None])
    ez = np.stack([(x - m.means[k]) @ derived.beta[k].T for k in range(m.K)])
    return resp, float(np.sum(norm)), MfaEStats(ez, derived.latent_cov)


def _m_step(x, resp, model, derived, floor, shared):
    n, d = x.shape
    K, R = model.K, model.R
    nk = resp.sum(axis=0)
    means = model.means.copy()
    loadings = model.loadings.copy()
    resid = np.zeros((K, d))
    for k in range(K):
        h = resp[:, k]
        if nk[k] <= 1e-12 * n:
            resid[k] = model.component_noise()[k] * nk[k]
            continue
        ez = (x - model.means[k]) @ derived.beta[k].T
        hz = h[:, None] * ez
        # augmented latent [z; 1] solves loadings and mean jointly
        big_a = np.empty((d, R + 1))
        big_a[:, :R] = x.T @ hz
        big_a[:, R] = x.T @ h
        big_b = np.empty((R + 1, R + 1))
        big_b[:R, :R] = nk[k] * derived.latent_cov[k] + ez.T @ hz
        big_b[:R, R] = hz.sum(axis=0)
        big_b[R, :R] = big_b[:R, R]
        big_b[R, R] = nk[k]
        try:
            sol = np.linalg.solve(big_b, big_a.T).T
        except np.linalg.LinAlgError as exc:
            raise MixtureError(f"singular MFA M-step for component {k}") from exc
        lam, mu = sol[:, :R], sol[:, R]
        r = x - mu - ez @ lam.T
        resid[k] = h @ (r * r) + nk[k] * np.einsum("dr,rs,ds->d", lam, derived.latent_cov[k], lam)
        loadings[k] = lam
        means[k] = mu
    if shared:
        noise = np.maximum(resid.sum(axis=0) / n, floor)
    else:
        safe_nk = np.where(nk > 1e-12 * n, nk, 1.0)
        noise = np.where(
            (nk > 1e-12 * n)[:, None], resid / safe_nk[:, None], model.component_noise()
        )
        noise = np.maximum(noise, floor)
    return MfaModel(nk / n, means, loadings, noise)


def init_mfa(x, K, R, cfg):
    n, d = x.shape
    floor = variance_floor(x, cfg)
    rng = np.random.default_rng(cfg.seed)
    centers, _ = kmeans_pp(x, K, rng, cfg.kmeans_iter)
    var = np.maximum(np.var(x, axis=0), floor)
    scale = cfg.loading_scale * math.sqrt(float(np.mean(var)))
    loadings = np.empty((K, d, R))
    for k in range(K):
        q, _ = np.linalg.qr(rng.standard_normal((d, R)))
        loadings[k] = scale * q
    noise = var.copy() if cfg.shared_noise else np.tile(var, (K, 1))
    return MfaModel(np.full(K, 1.0 / K), centers, loadings, noise), floor


def fit_mfa_em(bags, K, R, config=None):
    """Mixture of factor analyzers by exact EM."""
    cfg = config or EmConfig()
    x = stack_bags(bags)
    n, d = x.shape
    if R < 0 or R >= d:
        raise MixtureError(f"latent dimension R={R} must satisfy 0 <= R < D={d}")
    if K < 1 or n < K * (R + 1):
        raise MixtureError(f"need at least K*(R+1)={K * (R + 1)} samples, got {n}")
    model, floor = init_mfa(x, K, R, cfg)
    derived = mfa_derived(model)
    resp, ll, _ = mfa_posteriors_loglik(model, x, derived)
    history = [ll]
    for _ in range(cfg.max_iter):
        model = _m_step(x, resp, model, derived, floor, cfg.shared_noise)
        if not np.all(np.isfinite(model.noise)):
            raise MixtureError("MFA noise became non-finite")
        derived = mfa_derived(model)
        resp, ll, _ = mfa_posteriors_loglik(model, x, derived)
        if not np.isfinite(ll):
            raise MixtureError("MFA log-likelihood became non-finite")
        history.append(ll)
        if converged(history, cfg.tol):
            break
    return MfaModel(model.weights, model.means, model.loadings, model.noise, tuple(history))
