"""Model transfer between a Dirichlet mixture and a GMM in log-probability space.

Both models place component k at the responsibility-weighted mean of
``log pi``: the GMM as ``mu_k`` and the DMM as
``f(alpha_k) = psi(alpha_k) - psi(sum_l alpha_kl)``. Transfer maps one
centroid set onto the other.
"""

import numpy as np

from ..descriptors import stack_bags
from ..mixtures import DiagonalGmm, DirichletMixture, dirichlet_expected_log, log_simplex
from ..numerics import digamma, inv_digamma, trigamma

RESIDUAL_TOL = 1e-8


class TransferError(ValueError):
    """No positive Dirichlet parameter reproduces the requested centroid."""


def solve_dirichlet_centroid(mu, tol=RESIDUAL_TOL, max_iter=200):
    """Find alpha > 0 with ``psi(alpha) - psi(sum alpha) = mu``.

    A few fixed-point sweeps give a starting point; damped Newton with the
    diagonal-plus-rank-one Jacobian finishes. Raises ``TransferError`` when
    the residual cannot be brought below ``tol``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 1 or mu.size < 2:
        raise TransferError("centroid needs at least two coordinates")
    if not np.all(np.isfinite(mu)) or np.any(mu >= 0) or np.sum(np.exp(mu)) >= 1.0:
        raise TransferError(
            "centroid is not an expected log-probability (need mu < 0 and sum exp(mu) < 1)"
        )
    # precision guess from the Jensen gap; sum exp(mu) -> 1 as alpha_0 grows
    gap = 1.0 - np.sum(np.exp(mu))
    alpha = np.exp(mu) / np.sum(np.exp(mu)) * max((mu.size - 1) / (2.0 * gap), 1e-3)
    for _ in range(20):
        alpha = inv_digamma(mu + digamma(alpha.sum()))

    def residual(a):
        return digamma(a) - digamma(a.sum()) - mu

    res = residual(alpha)
    err = np.max(np.abs(res))
    for _ in range(max_iter):
        if err <= 0.01 * tol:
            break
        diag = trigamma(alpha)
        c = -trigamma(alpha.sum())
        dinv_r = res / diag
        step = dinv_r - (c * dinv_r.sum()) / (1.0 + c * np.sum(1.0 / diag)) / diag
        t = 1.0
        while t > 1e-12:
            cand = alpha - t * step
            if np.all(cand > 0):
                cand_res = residual(cand)
                cand_err = np.max(np.abs(cand_res))
                if cand_err < err:
                    break
            t *= 0.5
        else:
            break
        alpha, res, err = cand, cand_res, cand_err
    if not err <= tol:
        raise TransferError(f"Newton failed to reach residual {tol:g} (got {err:.3g})")
    return alpha


def gmm_to_dmm(gmm, epsilon=1e-10):
    """Dirichlet mixture whose centroids equal the GMM means (weights copied)."""
    alphas = np.stack([solve_dirichlet_centroid(mu) for mu in gmm.means])
    return DirichletMixture(np.array(gmm.weights, copy=True), alphas, epsilon)


def dmm_to_gmm(dmm, train_bags=None, variances=None):
    """GMM anchored at the DMM centroids with the global training variance.

    ``train_bags`` are simplex-valued; their floored logs give the global
    (diagonal) covariance. Alternatively pass ``variances`` directly.
    """
    if variances is None:
        if train_bags is None:
            raise ValueError("dmm_to_gmm needs training data or explicit variances")
        logp = log_simplex(stack_bags(train_bags), dmm.epsilon)
        variances = np.var(logp, axis=0)
    variances = np.broadcast_to(np.asarray(variances, dtype=np.float64), dmm.alphas.shape)
    return DiagonalGmm(
        np.array(dmm.weights, copy=True),
        dirichlet_expected_log(dmm.alphas),
        np.array(variances, copy=True),
    )


def transfer_centroids(direction, source, train_bags=None, variances=None):
    if direction == "dmm_to_gmm":
        if not isinstance(source, DirichletMixture):
            raise TypeError("dmm_to_gmm needs a DirichletMixture")
        return dmm_to_gmm(source, train_bags, variances)
    if direction == "gmm_to_dmm":
        if not isinstance(source, DiagonalGmm):
            raise TypeError("gmm_to_dmm needs a DiagonalGmm")
        return gmm_to_dmm(source)
    raise ValueError(f"unknown transfer direction {direction!r}")
