"""Slow, independent verification machinery.

Nothing here calls the mixture or encoder kernels. Log-likelihoods are
re-implemented with explicit loops and dense covariances, gradients come
from central differences, and Fisher information from Monte-Carlo sampling
with numpy's own Dirichlet and normal generators. Only the special
functions in ``numerics`` are shared.

Random streams use the counter-based Philox bit generator; chunk ``c`` of a
run with seed ``s`` draws from ``Philox(SeedSequence(s).spawn(C)[c])``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import log_gamma

_LOG_2PI = math.log(2.0 * math.pi)


def _logsumexp(values):
    m = max(values)
    if m == -math.inf:
        return m
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


# -- naive log-likelihoods ------------------------------------------------------


def gmm_loglik(weights, means, variances, x):
    total = []
    for xi in np.asarray(x, dtype=np.float64):
        terms = []
        for w, mu, var in zip(weights, means, variances):
            q = math.fsum((a - b) ** 2 / v for a, b, v in zip(xi, mu, var))
            ld = math.fsum(math.log(v) for v in var)
            terms.append(math.log(w) - 0.5 * (len(xi) * _LOG_2PI + ld + q))
        total.append(_logsumexp(terms))
    return math.fsum(total)


def dmm_loglik(weights, alphas, p, epsilon=1e-10):
    total = []
    for pi in np.asarray(p, dtype=np.float64):
        logp = [math.log(max(v, epsilon)) for v in pi]
        terms = []
        for w, alpha in zip(weights, alphas):
            lz = log_gamma(float(np.sum(alpha))) - math.fsum(log_gamma(float(a)) for a in alpha)
            terms.append(math.log(w) + lz + math.fsum((a - 1.0) * lp for a, lp in zip(alpha, logp)))
        total.append(_logsumexp(terms))
    return math.fsum(total)


def mfa_loglik(weights, means, loadings, noise, x):
    """Dense-covariance Gaussian mixture with S_k = L_k L_k^T + diag(psi_k)."""
    x = np.asarray(x, dtype=np.float64)
    K, D = np.asarray(means).shape
    noise = np.broadcast_to(noise, (K, D))
    comps = []
    for k in range(K):
        cov = loadings[k] @ loadings[k].T + np.diag(noise[k])
        sign, logdet = np.linalg.slogdet(cov)
        if sign <= 0:
            raise ValueError("component covariance is not positive definite")
        diff = x - means[k]
        quad = np.einsum("nd,nd->n", diff, np.linalg.solve(cov, diff.T).T)
        comps.append(math.log(weights[k]) - 0.5 * (D * _LOG_2PI + logdet + quad))
    comps = np.array(comps)
    return math.fsum(_logsumexp(list(col)) for col in comps.T)


def model_loglik(model, x):
    """Dispatch on ``model.kind`` to the naive log-likelihoods."""
    kind = model.kind
    if kind == "gmm":
        return gmm_loglik(model.weights, model.means, model.variances, x)
    if kind == "dmm":
        return dmm_loglik(model.weights, model.alphas, x, model.epsilon)
    if kind == "mfa":
        return mfa_loglik(model.weights, model.means, model.loadings, model.noise, x)
    raise ValueError(f"unknown model kind {kind!r}")


# -- finite differences -----------------------------------------------------------

# parameter group -> (attribute, transform applied to the perturbed value)
_GROUPS = {
    "means": ("means", None),
    "sigma": ("variances", "square"),
    "variances": ("variances", None),
    "alphas": ("alphas", None),
    "loadings": ("loadings", None),
}


class OracleDomainError(ValueError):
    """A perturbation would leave the parameter domain."""


@dataclass
class FiniteDiff:
    grad: np.ndarray
    flagged: list = field(default_factory=list)
    steps: np.ndarray | None = None


def central_difference(fn, theta, step=1e-5):
    """(fn(theta + h e_j) - fn(theta - h e_j)) / 2h for every entry j."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    flat = theta.ravel()
    for j in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[j] += step
        minus[j] -= step
        grad.flat[j] = (fn(plus.reshape(theta.shape)) - fn(minus.reshape(theta.shape))) / (2 * step)
    return grad


def finite_diff_score(model, bag, group, step=1e-5, loglik=None):
    """Central-difference gradient of the bag log-likelihood w.r.t. one group.

    ``group`` is one of ``means``, ``sigma`` (standard deviations),
    ``variances``, ``alphas`` or ``loadings``. Positive parameters whose
    symmetric step would reach zero get the step shrunk to half their value;
    those entries are reported in ``flagged``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if group not in _GROUPS:
        raise ValueError(f"unknown parameter group {group!r}")
    attr, transform = _GROUPS[group]
    x = bag.descriptors if hasattr(bag, "descriptors") else np.asarray(bag, dtype=np.float64)
    loglik = loglik or model_loglik
    base = np.array(getattr(model, attr), dtype=np.float64)
    theta = np.sqrt(base) if transform == "square" else base
    positive = group in ("sigma", "variances", "alphas")
    grad = np.empty_like(theta)
    steps = np.full(theta.shape, float(step))
    flagged = []
    for j in range(theta.size):
        h = step
        if positive and theta.flat[j] - h <= 0:
            h = 0.5 * theta.flat[j]
            if h <= 0:
                raise OracleDomainError(f"parameter {group}{np.unravel_index(j, theta.shape)} is not positive")
            flagged.append(tuple(int(i) for i in np.unravel_index(j, theta.shape)))
        steps.flat[j] = h
        vals = []
        for sgn in (1.0, -1.0):
            t = theta.copy()
            t.flat[j] += sgn * h
            value = t * t if transform == "square" else t
            vals.append(loglik(replace(model, **{attr: value}), x))
        grad.flat[j] = (vals[0] - vals[1]) / (2 * h)
    return FiniteDiff(grad, flagged, steps)


@dataclass
class GradCheckReport:
    """Comparison of an analytic gradient against a finite-difference one.

    Relative error of entry j is ``|a_j - f_j| / max(|a_j|, |f_j|, s)``
    with ``s = scale_floor * max(1, max|a|)``: entries far below the
    group's magnitude are judged on the group's scale.
    """

    name: str
    max_rel_error: float
    mean_rel_error: float
    failing: list
    flagged: list
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance

    def to_dict(self):
        return {
            "name": self.name,
            "max_rel_error": self.max_rel_error,
            "mean_rel_error": self.mean_rel_error,
            "failing": [list(i) for i in self.failing],
            "flagged": [list(i) for i in self.flagged],
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def relative_errors(analytic, numeric, scale_floor=1e-3):
    a = np.asarray(analytic, dtype=np.float64)
    f = np.asarray(numeric, dtype=np.float64)
    floor = scale_floor * max(1.0, float(np.max(np.abs(a), initial=0.0)))
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)


def compare_gradients(name, analytic, fd, tolerance=1e-5, scale_floor=1e-3):
    if isinstance(fd, FiniteDiff):
        numeric, flagged = fd.grad, fd.flagged
    else:
        numeric, flagged = fd, []
    rel = relative_errors(analytic, numeric, scale_floor)
    failing = [tuple(int(i) for i in idx) for idx in np.argwhere(rel > tolerance)]
    return GradCheckReport(name, float(rel.max(initial=0.0)), float(rel.mean()) if rel.size else 0.0,
                           failing, flagged, tolerance)


def richardson_gap(model, bag, group, step=1e-4):
    """Max |FD(h) - FD(h/10)|, which should shrink like h^2."""
    coarse = finite_diff_score(model, bag, group, step).grad
    fine = finite_diff_score(model, bag, group, step / 10).grad
    return float(np.max(np.abs(coarse - fine)))


# -- Monte-Carlo Fisher information ---------------------------------------------


@dataclass
class McFisherEstimate:
    cov: np.ndarray  # w_k * sample covariance of single-sample score data terms
    stderr: np.ndarray  # standard error of each entry of ``cov``
    n_samples: int


def _chunk_rngs(seed, n_chunks):
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n_chunks)]


def _score_sampler(model, k, variant):
    """Returns draw(rng, m) -> (m, P) array of single-sample score data terms."""
    if variant == "gauss_mean":
        mu = np.atleast_1d(model.means[k]).astype(np.float64)
        var = np.atleast_1d(model.variances[k]).astype(np.float64)

        def draw(rng, m):
            x = mu + np.sqrt(var) * rng.standard_normal((m, mu.size))
            return (x - mu) / var

        return draw
    if variant == "dmm_alpha":
        alpha = np.asarray(model.alphas[k], dtype=np.float64)

        def draw(rng, m):
            return np.log(rng.dirichlet(alpha, m))

        return draw
    if variant in ("mfa_mu", "mfa_lambda"):
        lam = np.asarray(model.loadings[k], dtype=np.float64)
        psi = np.broadcast_to(model.noise, model.means.shape)[k]
        cov = lam @ lam.T + np.diag(psi)
        chol = np.linalg.cholesky(cov)

        def draw(rng, m):
            delta = rng.standard_normal((m, cov.shape[0])) @ chol.T
            f = np.linalg.solve(cov, delta.T).T
            if variant == "mfa_mu":
                return f
            g = f @ lam
            return (f[:, :, None] * g[:, None, :]).reshape(m, -1)

        return draw
    raise ValueError(f"unknown Monte-Carlo variant {variant!r}")


def mc_fisher_info(model, k, variant, n_samples=10**6, seed=0, chunk=100_000, min_samples=10**5):
    """Monte-Carlo estimate of ``w_k Cov_k(score data term)``."""
    if n_samples < min_samples:
        raise ValueError(f"need at least {min_samples} samples")
    draw = _score_sampler(model, k, variant)
    n_chunks = -(-n_samples // chunk)
    rngs = _chunk_rngs(seed, n_chunks)
    total = 0
    s1 = s2 = s4 = None
    for c, rng in enumerate(rngs):
        m = min(chunk, n_samples - c * chunk)
        u = draw(rng, m)
        if s1 is None:
            p = u.shape[1]
            s1 = np.zeros(p)
            s2 = np.zeros((p, p))
            s4 = np.zeros((p, p))
        s1 += u.sum(axis=0)
        s2 += u.T @ u
        s4 += (u * u).T @ (u * u)
        total += m
    mean = s1 / total
    cov = s2 / total - np.outer(mean, mean)
    cov *= total / (total - 1)
    var_prod = np.maximum(s4 / total - (s2 / total) ** 2, 0.0)
    w = float(np.atleast_1d(model.weights)[k])
    return McFisherEstimate(w * cov, w * np.sqrt(var_prod / total), total)
