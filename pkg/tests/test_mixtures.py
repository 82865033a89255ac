import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semfish import oracle
from semfish.descriptors import DescriptorBag
from semfish.mixtures import (
    DiagonalGmm,
    DirichletMixture,
    EmConfig,
    MfaModel,
    MixtureError,
    dmm_posteriors_loglik,
    fit_dmm_em,
    fit_gmm_em,
    fit_mfa_em,
    gmm_posteriors_loglik,
    load_model,
    mfa_derived,
    mfa_posteriors_loglik,
    model_from_dict,
    model_to_dict,
    posteriors_loglik,
    save_model,
)


def random_gmm(rng, K=3, D=2):
    return DiagonalGmm(rng.dirichlet(np.ones(K)), rng.normal(size=(K, D)), rng.uniform(0.3, 2.0, (K, D)))


def random_mfa(rng, K=2, D=5, R=2, shared=True):
    noise = rng.uniform(0.3, 1.5, D if shared else (K, D))
    return MfaModel(rng.dirichlet(np.ones(K)), rng.normal(size=(K, D)), rng.normal(0, 0.7, (K, D, R)), noise)


# -- GMM ------------------------------------------------------------------------


def test_gmm_single_component_responsibilities_are_one():
    rng = np.random.default_rng(0)
    resp, _ = gmm_posteriors_loglik(random_gmm(rng, K=1), rng.normal(size=(10, 2)))
    np.testing.assert_array_equal(resp, 1.0)


def test_gmm_identical_components_split_evenly():
    m = DiagonalGmm(np.array([0.5, 0.5]), np.zeros((2, 3)), np.ones((2, 3)))
    resp, _ = gmm_posteriors_loglik(m, np.random.default_rng(1).normal(size=(8, 3)))
    np.testing.assert_allclose(resp, 0.5, rtol=0, atol=1e-15)


def test_gmm_loglik_matches_density_oracle():
    rng = np.random.default_rng(2)
    m = random_gmm(rng)
    x = rng.normal(size=(30, 2))
    resp, ll = gmm_posteriors_loglik(m, x)
    assert abs(ll - oracle.gmm_loglik(m.weights, m.means, m.variances, x)) <= 1e-10 * max(1, abs(ll))
    assert np.max(np.abs(resp.sum(axis=1) - 1.0)) <= 1e-10
    with pytest.raises(ValueError):
        gmm_posteriors_loglik(m, x[:, :1])


def test_gmm_single_component_em_is_closed_form():
    x = np.random.default_rng(3).normal(2.0, 3.0, (500, 4))
    m = fit_gmm_em([DescriptorBag(x)], 1)
    np.testing.assert_allclose(m.means[0], x.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(m.variances[0], x.var(axis=0), rtol=1e-12)


def test_gmm_recovers_separated_clusters():
    rng = np.random.default_rng(4)
    truth = np.array([[0.0, 0.0], [10.0, 10.0]])
    x = np.concatenate([rng.normal(truth[0], 1.0, (500, 2)), rng.normal(truth[1], 1.0, (500, 2))])
    m = fit_gmm_em([DescriptorBag(x)], 2)
    means = m.means[np.argsort(m.means[:, 0])]
    assert np.max(np.abs(means - truth)) < 0.1
    assert abs(np.sum(m.weights) - 1.0) <= 1e-10


def test_gmm_variance_floor_on_duplicated_points():
    x = np.repeat(np.array([[0.0, 1.0], [5.0, -2.0]]), 20, axis=0)
    cfg = EmConfig()
    m = fit_gmm_em([DescriptorBag(x)], 2, cfg)
    floor = cfg.floor_scale * float(np.mean(np.var(x, axis=0)))
    assert np.all(np.isfinite(m.means))
    np.testing.assert_allclose(m.variances, floor, rtol=1e-12)


def test_gmm_em_errors():
    with pytest.raises(MixtureError):
        fit_gmm_em([DescriptorBag(np.ones((5, 2)))], 1)
    with pytest.raises(MixtureError):
        fit_gmm_em([DescriptorBag(np.random.default_rng(0).normal(size=(3, 2)))], 4)


# -- DMM ------------------------------------------------------------------------


def test_dmm_single_component_and_uniform_alpha():
    rng = np.random.default_rng(5)
    p = rng.dirichlet(np.ones(3), 12)
    resp, _ = dmm_posteriors_loglik(DirichletMixture(np.array([1.0]), np.array([[2.0, 3.0, 4.0]])), p)
    np.testing.assert_array_equal(resp, 1.0)
    w = np.array([0.3, 0.7])
    resp, _ = dmm_posteriors_loglik(DirichletMixture(w, np.ones((2, 3))), p)
    np.testing.assert_allclose(resp, np.tile(w, (12, 1)), atol=1e-15)


def test_dmm_loglik_matches_density_oracle():
    rng = np.random.default_rng(6)
    m = DirichletMixture(np.array([0.4, 0.6]), rng.uniform(0.5, 5.0, (2, 3)))
    p = rng.dirichlet(np.full(3, 2.0), 25)
    resp, ll = dmm_posteriors_loglik(m, p)
    assert abs(ll - oracle.dmm_loglik(m.weights, m.alphas, p)) <= 1e-10 * max(1, abs(ll))
    assert np.max(np.abs(resp.sum(axis=1) - 1.0)) <= 1e-10
    with pytest.raises(ValueError):
        dmm_posteriors_loglik(m, p * 2.0)


def test_dmm_recovers_dirichlet_parameters():
    rng = np.random.default_rng(7)
    truth = np.array([2.0, 5.0, 3.0])
    m = fit_dmm_em([DescriptorBag(rng.dirichlet(truth, 10_000))], 1)
    assert np.all(np.abs(m.alphas[0] / truth - 1.0) < 0.1)


def test_dmm_exchangeable_data_gives_equal_alphas():
    m = fit_dmm_em([DescriptorBag(np.random.default_rng(8).dirichlet(np.full(4, 3.0), 5000))], 1)
    a = m.alphas[0]
    assert (a.max() - a.min()) / a.mean() < 0.05


def test_dmm_single_repeated_descriptor_stays_bounded():
    p = np.tile([0.2, 0.3, 0.5], (50, 1))
    cfg = EmConfig()
    m = fit_dmm_em([DescriptorBag(p)], 1, cfg)
    assert np.all(np.isfinite(m.alphas))
    assert np.all((m.alphas >= cfg.alpha_min) & (m.alphas <= cfg.alpha_max))


# -- MFA ------------------------------------------------------------------------


def test_mfa_derived_zero_loadings():
    noise = np.array([0.5, 2.0, 1.5])
    m = MfaModel(np.array([1.0]), np.zeros((1, 3)), np.zeros((1, 3, 2)), noise)
    d = mfa_derived(m)
    np.testing.assert_allclose(d.cov_inv(0), np.diag(1 / noise), atol=1e-15)
    np.testing.assert_array_equal(d.beta[0], 0.0)
    assert abs(d.logdet[0] - np.sum(np.log(noise))) <= 1e-14


def test_mfa_derived_hand_example():
    m = MfaModel(np.array([1.0]), np.zeros((1, 2)), np.array([[[1.0], [0.0]]]), np.ones(2))
    d = mfa_derived(m)
    np.testing.assert_allclose(m.covariance(0), [[2.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(d.cov_inv(0), [[0.5, 0.0], [0.0, 1.0]], atol=1e-15)
    np.testing.assert_allclose(d.beta[0], [[0.5, 0.0]], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(1, 3), st.booleans(), st.integers(0, 2**31 - 1))
def test_woodbury_matches_dense_inverse(D, K, shared, seed):
    rng = np.random.default_rng(seed)
    R = int(rng.integers(1, D))
    m = random_mfa(rng, K, D, R, shared)
    d = mfa_derived(m)
    for k in range(K):
        cov = m.covariance(k)
        assert np.max(np.abs(d.cov_inv(k) - np.linalg.inv(cov))) <= 1e-10
        assert abs(d.logdet[k] - np.linalg.slogdet(cov)[1]) <= 1e-10 * max(1, abs(d.logdet[k]))
        assert np.max(np.abs(np.linalg.eigvals(d.beta[k] @ m.loadings[k]))) < 1 + 1e-8


def test_mfa_loglik_matches_dense_oracle():
    rng = np.random.default_rng(9)
    m = random_mfa(rng, K=2, D=5, R=2)
    x = rng.normal(size=(40, 5))
    resp, ll, stats = mfa_posteriors_loglik(m, x)
    assert abs(ll - oracle.mfa_loglik(m.weights, m.means, m.loadings, m.noise, x)) <= 1e-10 * abs(ll)
    assert np.max(np.abs(resp.sum(axis=1) - 1.0)) <= 1e-10
    assert stats.ezz.shape == (2, 40, 2, 2)


def test_mfa_posterior_factor_mean_is_zero_at_component_mean():
    rng = np.random.default_rng(10)
    m = random_mfa(rng, K=1, D=4, R=2)
    _, _, stats = mfa_posteriors_loglik(m, m.means[:1])
    np.testing.assert_allclose(stats.ez, 0.0, atol=1e-15)


def test_zero_loading_mfa_nests_diagonal_gmm():
    rng = np.random.default_rng(11)
    g = random_gmm(rng, K=3, D=4)
    m = MfaModel(g.weights, g.means, np.zeros((3, 4, 2)), g.variances)
    x = rng.normal(size=(20, 4))
    rg, lg = gmm_posteriors_loglik(g, x)
    rm, lm, _ = mfa_posteriors_loglik(m, x)
    assert np.max(np.abs(rg - rm)) <= 1e-10
    assert abs(lg - lm) <= 1e-10


def test_mfa_finds_line_direction():
    rng = np.random.default_rng(12)
    direction = np.array([1.0, 2.0, -1.0]) / np.sqrt(6.0)
    x = rng.normal(size=(2000, 1)) * 3.0 * direction + rng.normal(0, 0.01, (2000, 3))
    m = fit_mfa_em([DescriptorBag(x)], 1, 1)
    lam = m.loadings[0, :, 0] / np.linalg.norm(m.loadings[0, :, 0])
    angle = np.degrees(np.arccos(min(1.0, abs(lam @ direction))))
    assert angle < 5.0


def test_mfa_without_loadings_follows_gmm_em():
    rng = np.random.default_rng(13)
    x = np.concatenate([rng.normal(0, 1, (200, 3)), rng.normal(4, 0.5, (200, 3))])
    cfg = EmConfig(max_iter=30, tol=0.0, shared_noise=False)
    g = fit_gmm_em([DescriptorBag(x)], 2, cfg)
    m = fit_mfa_em([DescriptorBag(x)], 2, 0, cfg)
    np.testing.assert_allclose(m.history, g.history, rtol=0, atol=1e-8)


def test_mfa_separated_clusters_get_confident_posteriors():
    rng = np.random.default_rng(14)
    a = rng.normal(0, 1, (300, 4))
    b = rng.normal(12, 1, (300, 4))
    m = fit_mfa_em([DescriptorBag(np.concatenate([a, b]))], 2, 1)
    ra, _, _ = mfa_posteriors_loglik(m, a)
    rb, _, _ = mfa_posteriors_loglik(m, b)
    ka, kb = np.argmax(ra.sum(axis=0)), np.argmax(rb.sum(axis=0))
    assert ka != kb
    assert ra[:, ka].min() >= 0.99 and rb[:, kb].min() >= 0.99


def test_mfa_em_errors():
    x = np.random.default_rng(0).normal(size=(10, 3))
    with pytest.raises(MixtureError):
        fit_mfa_em([DescriptorBag(x)], 1, 3)
    with pytest.raises(MixtureError):
        fit_mfa_em([DescriptorBag(x)], 4, 2)


# -- shared properties ----------------------------------------------------------


def _data(kind, rng):
    if kind == "dmm":
        return rng.dirichlet(rng.uniform(0.5, 4.0, 3), 150)
    centers = rng.normal(0, 3, (3, 4))
    return centers[rng.integers(3, size=150)] + rng.normal(size=(150, 4))


def _fit(kind, x, cfg):
    if kind == "gmm":
        return fit_gmm_em([DescriptorBag(x)], 3, cfg)
    if kind == "dmm":
        return fit_dmm_em([DescriptorBag(x)], 2, cfg)
    return fit_mfa_em([DescriptorBag(x)], 2, 2, cfg)


@pytest.mark.parametrize("kind", ["gmm", "dmm", "mfa"])
def test_em_is_monotone(kind):
    rng = np.random.default_rng(15)
    for seed in range(3):
        m = _fit(kind, _data(kind, rng), EmConfig(max_iter=50, tol=0.0, seed=seed))
        assert len(m.history) == 51
        assert np.min(np.diff(m.history)) >= -1e-8
        assert abs(np.sum(m.weights) - 1.0) <= 1e-10


@pytest.mark.parametrize("kind", ["gmm", "dmm", "mfa"])
def test_model_serialization_is_bit_exact(kind, tmp_path):
    rng = np.random.default_rng(16)
    m = _fit(kind, _data(kind, rng), EmConfig(max_iter=5))
    path = tmp_path / "model.json"
    save_model(m, path)
    back = load_model(path)
    for name, value in model_to_dict(m)["params"].items():
        np.testing.assert_array_equal(model_to_dict(back)["params"][name]["data"], value["data"])
    assert back.history == m.history
    doc = json.loads(path.read_text())
    assert doc["kind"] == kind and doc["K"] == m.K
    x = _data(kind, rng)
    assert posteriors_loglik(back, x)[1] == posteriors_loglik(m, x)[1]


def test_model_from_dict_rejects_unknown_kind():
    with pytest.raises(ValueError):
        model_from_dict({"kind": "hmm", "params": {}})
