"""Block-diagonal Fisher information approximations and their scalings."""

from dataclasses import dataclass

import numpy as np

from ..mixtures import mfa_derived
from ..numerics import trigamma

EIG_FLOOR = 1e-10


class FisherInfoError(ValueError):
    """A Fisher-information block is not positive definite."""


def inv_sqrt_psd(a, floor=EIG_FLOOR):
    """Symmetric inverse square root with eigenvalues floored at ``floor``."""
    a = 0.5 * (a + a.T)
    evals, evecs = np.linalg.eigh(a)
    return (evecs / np.sqrt(np.maximum(evals, floor))) @ evecs.T


@dataclass(frozen=True)
class DmmFisherInfo:
    blocks: np.ndarray  # (K, S, S)
    inv_sqrt: np.ndarray  # (K, S, S)


def dmm_fim_block(alpha, weight=1.0):
    """w (diag psi'(alpha) - psi'(sum alpha) 11^T)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return weight * (np.diag(trigamma(alpha)) - trigamma(alpha.sum()))


def dmm_fisher_info(m):
    blocks = np.stack([dmm_fim_block(a, w) for a, w in zip(m.alphas, m.weights)])
    inv = np.empty_like(blocks)
    for k, block in enumerate(blocks):
        evals = np.linalg.eigvalsh(block)
        if not evals.min() > 0.0:
            raise FisherInfoError(
                f"Dirichlet Fisher block {k} is not positive definite (min eigenvalue {evals.min():.3g})"
            )
        inv[k] = inv_sqrt_psd(block)
    return DmmFisherInfo(blocks, inv)


@dataclass(frozen=True)
class MfaFisherInfo:
    """Scalings for MFA scores.

    ``mean_scaling[k] = (w_k S_k)^{-1/2}``; ``loading_scaling[k]`` is the
    inverse square root of ``w_k Cov_k`` of the vectorized loading score
    (``None`` when not requested).
    """

    mean_scaling: np.ndarray | None
    loading_scaling: np.ndarray | None
    loading_cov: np.ndarray | None


def loading_score_covariance(m, k, derived=None):
    """Covariance of the single-sample loading score data term under component k.

    Entry ((i, j), (l, m)) is ``A_im A_lj + Sinv_il M_jm`` with
    ``A = S^-1 L``, ``M = beta L``; row-major (i, j) -> i * R + j.
    """
    derived = derived or mfa_derived(m)
    a = derived.cov_inv_loadings(k)
    sinv = derived.cov_inv(k)
    mm = derived.beta[k] @ m.loadings[k]
    d, r = m.D, m.R
    cov = np.einsum("im,lj->ijlm", a, a) + np.einsum("il,jm->ijlm", sinv, mm)
    return cov.reshape(d * r, d * r)


def mfa_fisher_scaling(m, loadings=True, means=True):
    derived = mfa_derived(m)
    mean_scaling = None
    if means:
        mean_scaling = np.stack(
            [inv_sqrt_psd(m.weights[k] * m.covariance(k)) for k in range(m.K)]
        )
    loading_scaling = loading_cov = None
    if loadings:
        dr = m.D * m.R
        loading_scaling = np.empty((m.K, dr, dr))
        loading_cov = np.empty((m.K, dr, dr))
        for k in range(m.K):
            fk = m.weights[k] * loading_score_covariance(m, k, derived)
            loading_cov[k] = fk
            if not np.any(m.loadings[k]):
                # zero loadings: the covariance vanishes; leave scores unscaled
                loading_scaling[k] = np.eye(dr)
            else:
                loading_scaling[k] = inv_sqrt_psd(fk)
    return MfaFisherInfo(mean_scaling, loading_scaling, loading_cov)
