"""Analytic Fisher scores versus finite differences on random instances.

This module is the only place where the encoders meet the oracle: it draws
random models and bags, evaluates the unscaled scores, and hands both to
``oracle.compare_gradients``.
"""

import numpy as np

from .encoders import dmm_score, gmm_score_mean, gmm_score_sigma, mfa_fs_lambda, mfa_fs_mu
from .mixtures import DiagonalGmm, DirichletMixture, MfaModel
from .oracle import compare_gradients, finite_diff_score

KINDS = ("gmm", "dmm", "mfa")
GROUPS = {
    "gmm": (("means", gmm_score_mean), ("sigma", gmm_score_sigma)),
    "dmm": (("alphas", dmm_score),),
    "mfa": (("means", mfa_fs_mu), ("loadings", mfa_fs_lambda)),
}


def random_instance(kind, rng, max_d=8, max_k=3, max_r=2, max_n=50):
    """(model, descriptors) with D <= max_d, K <= max_k, R <= max_r, n <= max_n."""
    K = int(rng.integers(1, max_k + 1))
    n = int(rng.integers(5, max_n + 1))
    w = rng.dirichlet(np.full(K, 2.0))
    if kind == "gmm":
        D = int(rng.integers(1, max_d + 1))
        m = DiagonalGmm(w, rng.normal(size=(K, D)), rng.uniform(0.5, 2.0, (K, D)))
        return m, rng.normal(0.0, 1.5, (n, D))
    if kind == "dmm":
        S = int(rng.integers(2, max_d + 1))
        m = DirichletMixture(w, rng.uniform(0.5, 5.0, (K, S)))
        return m, rng.dirichlet(np.full(S, 2.0), n)
    if kind == "mfa":
        D = int(rng.integers(2, max_d + 1))
        R = int(rng.integers(1, min(max_r, D - 1) + 1))
        m = MfaModel(w, rng.normal(size=(K, D)), rng.normal(0.0, 0.5, (K, D, R)),
                     rng.uniform(0.5, 1.5, D))
        return m, rng.normal(0.0, 1.5, (n, D))
    raise ValueError(f"unknown model kind {kind!r}")


def _unscaled(fn, model, x):
    out = fn(model, x)
    return np.asarray(getattr(out, "vector", out)).ravel()


def check_instance(model, x, kind, step=1e-5, tolerance=1e-5):
    reports = []
    for group, fn in GROUPS[kind]:
        fd = finite_diff_score(model, x, group, step)
        fd.grad = fd.grad.ravel()
        reports.append(compare_gradients(f"{kind}.{group}", _unscaled(fn, model, x), fd, tolerance))
    return reports


def run_gradcheck(kinds=KINDS, instances=20, seed=0, step=1e-5, tolerance=1e-5):
    """Returns a structured report: per group worst errors over all instances."""
    rng = np.random.Generator(np.random.Philox(seed))
    groups = {}
    for kind in kinds:
        for _ in range(instances):
            model, x = random_instance(kind, rng)
            for rep in check_instance(model, x, kind, step, tolerance):
                g = groups.setdefault(rep.name, {"max_rel_error": 0.0, "mean_rel_error": 0.0,
                                                 "instances": 0, "failing_instances": 0})
                g["max_rel_error"] = max(g["max_rel_error"], rep.max_rel_error)
                g["mean_rel_error"] += rep.mean_rel_error / instances
                g["instances"] += 1
                g["failing_instances"] += int(not rep.passed)
    passed = all(g["failing_instances"] == 0 for g in groups.values())
    return {"tolerance": tolerance, "step": step, "seed": seed, "groups": groups, "passed": passed}
