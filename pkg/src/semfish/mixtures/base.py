from dataclasses import dataclass

import numpy as np


class MixtureError(RuntimeError):
    """EM could not produce a valid model."""


@dataclass(frozen=True)
class EmConfig:
    """Settings shared by all EM trainers.

    ``floor_scale`` multiplies the global data variance to give the
    variance/noise floor. ``tol`` is the relative log-likelihood improvement
    below which EM stops; ``tol=0`` runs exactly ``max_iter`` iterations.
    """

    max_iter: int = 200
    tol: float = 1e-6
    seed: int = 0
    floor_scale: float = 1e-6
    kmeans_iter: int = 10
    shared_noise: bool = True
    loading_scale: float = 0.1
    newton_iter: int = 50
    alpha_min: float = 1e-4
    alpha_max: float = 1e6
    epsilon: float = 1e-10
    deterministic: bool = True


def variance_floor(x, cfg):
    floor = cfg.floor_scale * float(np.mean(np.var(x, axis=0)))
    if not floor > 0.0:
        raise MixtureError("degenerate data: all descriptors are identical")
    return floor


def kmeans_pp(x, k, rng, iters=10):
    """k-means++ seeding followed by Lloyd iterations; returns (centers, labels)."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    labels = _assign(x, centers)
    for _ in range(iters):
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
        new = _assign(x, centers)
        if np.array_equal(new, labels):
            break
        labels = new
    return centers, labels


def _assign(x, centers):
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * x @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def converged(history, tol):
    if len(history) < 2 or tol <= 0:
        return False
    prev, cur = history[-2], history[-1]
    return (cur - prev) < tol * max(abs(prev), 1e-300)


def safe_log(w):
    with np.errstate(divide="ignore"):
        return np.log(w)
