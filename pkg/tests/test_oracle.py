from types import SimpleNamespace

import numpy as np
import pytest

from semfish.mixtures import DiagonalGmm, DirichletMixture, MfaModel
from semfish.oracle import (
    FiniteDiff,
    OracleDomainError,
    central_difference,
    compare_gradients,
    finite_diff_score,
    mc_fisher_info,
    model_loglik,
    relative_errors,
    richardson_gap,
)


def test_quadratic_toy_derivative():
    a = np.array([1.0, -2.0, 0.5])
    theta = np.array([0.3, 0.3, 0.3])
    grad = central_difference(lambda t: -0.5 * np.sum((t - a) ** 2), theta, 1e-3)
    np.testing.assert_allclose(grad, a - theta, atol=1e-10)


def test_gmm_mean_fd_is_consistent_across_steps():
    rng = np.random.default_rng(0)
    m = DiagonalGmm(np.array([0.4, 0.6]), rng.normal(size=(2, 3)), rng.uniform(0.5, 2, (2, 3)))
    x = rng.normal(size=(20, 3))
    coarse = finite_diff_score(m, x, "means", 1e-4).grad
    fine = finite_diff_score(m, x, "means", 1e-5).grad
    assert np.max(relative_errors(fine, coarse)) <= 1e-5
    # Richardson: the gap between h and h/10 shrinks about 100x when h shrinks 10x
    g1 = richardson_gap(m, x, "means", 1e-2)
    g2 = richardson_gap(m, x, "means", 1e-3)
    assert g2 < g1 / 20


def test_small_alpha_step_is_clipped_and_flagged():
    m = DirichletMixture(np.array([1.0]), np.array([[0.01, 2.0, 3.0]]))
    x = np.random.default_rng(1).dirichlet([1.0, 2.0, 3.0], 10)
    fd = finite_diff_score(m, x, "alphas", 0.1)
    assert fd.flagged == [(0, 0)]
    assert fd.steps[0, 0] == 0.005 and fd.steps[0, 1] == 0.1
    assert np.all(np.isfinite(fd.grad))


def test_finite_diff_argument_errors():
    m = DirichletMixture(np.array([1.0]), np.array([[1.0, 2.0]]))
    x = np.array([[0.5, 0.5]])
    with pytest.raises(ValueError):
        finite_diff_score(m, x, "alphas", 0.0)
    with pytest.raises(ValueError):
        finite_diff_score(m, x, "nonsense")
    with pytest.raises(OracleDomainError):
        finite_diff_score(DirichletMixture(np.array([1.0]), np.array([[0.0, 2.0]])), x, "alphas")


def test_report_fields():
    rep = compare_gradients("toy", np.array([1.0, 2.0]), FiniteDiff(np.array([1.0, 2.1]), [(1,)]))
    assert not rep.passed and rep.failing == [(1,)] and rep.flagged == [(1,)]
    assert rep.max_rel_error >= 0 and rep.mean_rel_error >= 0
    assert rep.to_dict()["passed"] is False
    assert compare_gradients("ok", np.ones(3), np.ones(3)).passed


def test_model_loglik_dispatch():
    m = MfaModel(np.array([1.0]), np.zeros((1, 2)), np.zeros((1, 2, 1)), np.ones(2))
    x = np.zeros((1, 2))
    assert abs(model_loglik(m, x) + np.log(2 * np.pi)) < 1e-14
    with pytest.raises(ValueError):
        model_loglik(SimpleNamespace(kind="hmm"), x)


def test_gaussian_fisher_information_within_three_standard_errors():
    sigma2 = 2.5
    m = DiagonalGmm(np.array([1.0]), np.array([[0.7]]), np.array([[sigma2]]))
    est = mc_fisher_info(m, 0, "gauss_mean", n_samples=10**5, seed=1)
    assert abs(est.cov[0, 0] - 1 / sigma2) <= 3 * est.stderr[0, 0]


def test_monte_carlo_error_shrinks_like_inverse_sqrt_n():
    m = DirichletMixture(np.array([1.0]), np.array([[2.0, 3.0]]))
    errs = [mc_fisher_info(m, 0, "dmm_alpha", n, seed=5, min_samples=10**4).stderr.max()
            for n in (10**4, 10**5, 10**6)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, np.sqrt(10), rtol=0.1)


def test_monte_carlo_requires_enough_samples():
    m = DiagonalGmm(np.array([1.0]), np.zeros((1, 1)), np.ones((1, 1)))
    with pytest.raises(ValueError):
        mc_fisher_info(m, 0, "gauss_mean", n_samples=1000)
    with pytest.raises(ValueError):
        mc_fisher_info(m, 0, "bogus", n_samples=10**5)


def test_monte_carlo_is_reproducible():
    m = MfaModel(np.array([1.0]), np.zeros((1, 2)), np.array([[[1.0], [0.3]]]), np.ones(2))
    a = mc_fisher_info(m, 0, "mfa_lambda", n_samples=10**5, seed=9)
    b = mc_fisher_info(m, 0, "mfa_lambda", n_samples=10**5, seed=9)
    np.testing.assert_array_equal(a.cov, b.cov)
