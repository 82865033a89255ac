"""Fisher scores and Fisher vectors of the three background models.

Scores are gradients of the bag log-likelihood at the background model,
read off the M-step of EM: responsibilities from the E-step weight a
per-component residual. GMM and DMM vectors carry the 1/n prefactor; MFA
scores are plain sums unless ``per_descriptor`` is set.
"""

from dataclasses import dataclass, replace

import numpy as np

from ..descriptors import as_array
from ..mixtures import (
    DiagonalGmm,
    DirichletMixture,
    MfaModel,
    dmm_posteriors_loglik,
    gmm_posteriors_loglik,
    log_simplex,
    mfa_derived,
    mfa_posteriors_loglik,
)
from .information import dmm_fisher_info, mfa_fisher_scaling

VARIANTS = ("gmm_mu", "gmm_sigma", "dmm_alpha", "mfa_mu", "mfa_lambda", "generic", "concat")


@dataclass(frozen=True)
class FisherEncoding:
    vector: np.ndarray
    model_kind: str
    variant: str
    K: int
    D: int
    R: int = 0
    power: float | None = None
    l2: bool = False

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown encoding variant {self.variant!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("encoding has non-finite entries")
        object.__setattr__(self, "vector", v)

    def __len__(self):
        return self.vector.size

    def blocks(self):
        """Per-component view: (K, D) or (K, D, R)."""
        if self.variant == "mfa_lambda":
            return self.vector.reshape(self.K, self.D, self.R)
        return self.vector.reshape(self.K, -1)


def _check_dim(m, x):
    if x.shape[1] != m.D:
        raise ValueError(f"model dimension {m.D} does not match descriptors {x.shape[1]}")


# -- diagonal GMM -------------------------------------------------------------


def gmm_score_mean(m, bag, resp=None):
    """d log p(bag) / d mu_k, shape (K, D)."""
    x = as_array(bag)
    _check_dim(m, x)
    if resp is None:
        resp, _ = gmm_posteriors_loglik(m, x)
    return (resp.T @ x - resp.sum(axis=0)[:, None] * m.means) / m.variances


def gmm_score_sigma(m, bag, resp=None):
    """d log p(bag) / d sigma_k (standard deviations), shape (K, D)."""
    x = as_array(bag)
    _check_dim(m, x)
    if resp is None:
        resp, _ = gmm_posteriors_loglik(m, x)
    sigma = np.sqrt(m.variances)
    out = np.empty_like(m.means)
    for k in range(m.K):
        diff = x - m.means[k]
        out[k] = resp[:, k] @ (diff * diff) / sigma[k] ** 3 - resp[:, k].sum() / sigma[k]
    return out


def gmm_fv_mean(m, bag):
    x = as_array(bag)
    _check_dim(m, x)
    resp, _ = gmm_posteriors_loglik(m, x)
    n = x.shape[0]
    sigma = np.sqrt(m.variances)
    blocks = (resp.T @ x - resp.sum(axis=0)[:, None] * m.means) / sigma
    blocks /= n * np.sqrt(m.weights)[:, None]
    return FisherEncoding(blocks.ravel(), "gmm", "gmm_mu", m.K, m.D)


def gmm_fv_variance(m, bag):
    x = as_array(bag)
    _check_dim(m, x)
    resp, _ = gmm_posteriors_loglik(m, x)
    n = x.shape[0]
    blocks = np.empty_like(m.means)
    for k in range(m.K):
        diff = x - m.means[k]
        blocks[k] = resp[:, k] @ (diff * diff / m.variances[k] - 1.0)
    blocks /= n * np.sqrt(2.0 * m.weights)[:, None]
    return FisherEncoding(blocks.ravel(), "gmm", "gmm_sigma", m.K, m.D)


# -- Dirichlet mixture --------------------------------------------------------


def dmm_score(m, bag):
    """d log p(bag) / d alpha_k, shape (K, S)."""
    logp = log_simplex(bag, m.epsilon)
    resp, _ = dmm_posteriors_loglik(m, bag)
    return resp.T @ logp - resp.sum(axis=0)[:, None] * m.centroids()


def dmm_fv(m, bag, fim=None):
    """F_k^{-1/2} applied to the per-descriptor mean alpha score."""
    fim = fim or dmm_fisher_info(m)
    n = as_array(bag).shape[0]
    score = dmm_score(m, bag) / n
    blocks = np.einsum("kij,kj->ki", fim.inv_sqrt, score)
    return FisherEncoding(blocks.ravel(), "dmm", "dmm_alpha", m.K, m.S)


# -- mixture of factor analyzers ------------------------------------------------


def mfa_fs_mu(m, bag, derived=None, per_descriptor=False):
    """sum_i h_ik S_k^-1 (x_i - mu_k), flattened (K, D)."""
    x = as_array(bag)
    _check_dim(m, x)
    derived = derived or mfa_derived(m)
    resp, _, _ = mfa_posteriors_loglik(m, x, derived)
    blocks = np.empty((m.K, m.D))
    for k in range(m.K):
        blocks[k] = derived.apply_cov_inv(k, (resp[:, k] @ x - resp[:, k].sum() * m.means[k])[None])[0]
    if per_descriptor:
        blocks /= x.shape[0]
    return FisherEncoding(blocks.ravel(), "mfa", "mfa_mu", m.K, m.D, m.R)


def mfa_fs_lambda(m, bag, derived=None, per_descriptor=False):
    """sum_i h_ik [S^-1 d d^T beta^T - S^-1 L], row-major (K, D, R)."""
    x = as_array(bag)
    _check_dim(m, x)
    derived = derived or mfa_derived(m)
    resp, _, _ = mfa_posteriors_loglik(m, x, derived)
    blocks = np.empty((m.K, m.D, m.R))
    for k in range(m.K):
        h = resp[:, k]
        f = derived.apply_cov_inv(k, x - m.means[k])  # S^-1 d
        g = f @ m.loadings[k]  # beta d
        blocks[k] = (f * h[:, None]).T @ g - h.sum() * derived.cov_inv_loadings(k)
    if per_descriptor:
        blocks /= x.shape[0]
    return FisherEncoding(blocks.ravel(), "mfa", "mfa_lambda", m.K, m.D, m.R)


def mfa_fv_mu(m, bag, info=None, per_descriptor=False):
    info = info or mfa_fisher_scaling(m, loadings=False)
    e = mfa_fs_mu(m, bag, per_descriptor=per_descriptor)
    blocks = np.einsum("kij,kj->ki", info.mean_scaling, e.blocks())
    return replace(e, vector=blocks.ravel())


def mfa_fv_lambda(m, bag, info=None, per_descriptor=False):
    info = info or mfa_fisher_scaling(m)
    e = mfa_fs_lambda(m, bag, per_descriptor=per_descriptor)
    flat = e.vector.reshape(m.K, m.D * m.R)
    blocks = np.einsum("kij,kj->ki", info.loading_scaling, flat)
    return replace(e, vector=blocks.ravel())


def concatenate(encodings):
    """(mu blocks, Lambda blocks, ...) in the order given."""
    encodings = list(encodings)
    first = encodings[0]
    vec = np.concatenate([e.vector for e in encodings])
    return FisherEncoding(vec, first.model_kind, "concat", first.K, first.D, first.R)


def encode(m, bag, variant, **kw):
    """Dispatch on variant name."""
    table = {
        "gmm_mu": gmm_fv_mean,
        "gmm_sigma": gmm_fv_variance,
        "dmm_alpha": dmm_fv,
        "mfa_mu": mfa_fs_mu,
        "mfa_lambda": mfa_fs_lambda,
        "mfa_fv_mu": mfa_fv_mu,
        "mfa_fv_lambda": mfa_fv_lambda,
    }
    if variant == "mfa_mu_lambda":
        return concatenate([mfa_fs_mu(m, bag, **kw), mfa_fs_lambda(m, bag, **kw)])
    expected = {"gmm": DiagonalGmm, "dmm": DirichletMixture, "mfa": MfaModel}[variant[:3]]
    if not isinstance(m, expected):
        raise TypeError(f"variant {variant} needs a {expected.__name__}")
    return table[variant](m, bag, **kw)


def normalize_fv(e, power=0.5):
    """Signed power normalization followed by L2 normalization."""
    if not 0.0 < power <= 1.0:
        raise ValueError("power must lie in (0, 1]")
    v = e.vector
    if power != 1.0:
        v = np.sign(v) * np.abs(v) ** power
    norm = np.linalg.norm(v)
    if norm > 0:
        v = v / norm
    return replace(e, vector=v, power=power, l2=True)
