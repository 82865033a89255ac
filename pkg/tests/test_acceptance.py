"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the summary lines.
"""

import time

import numpy as np
import pytest

from semfish.classifier import LinearClassifier, train_linear
from semfish.config import PipelineConfig
from semfish.descriptors import DescriptorBag
from semfish.encoders import (
    dmm_column,
    dmm_fisher_info,
    dmm_fv,
    dmm_score,
    dmm_to_gmm,
    gmm_column,
    gmm_fv_mean,
    gmm_score_mean,
    gmm_to_dmm,
    generic_fv,
    mfa_fisher_scaling,
    mfa_fs_lambda,
    mfa_fs_mu,
    solve_dirichlet_centroid,
)
from semfish.descriptors import embed_array
from semfish.gradcheck import run_gradcheck
from semfish.mfafsnet import (
    CLASSIFIER_NAMES,
    PARAM_NAMES,
    MfaFsLayerParams,
    TrainingConfig,
    finetune,
    layer_features,
    layer_forward,
    layer_init_from_mfa,
    loss_and_gradients,
    tie_deviation,
)
from semfish.mixtures import (
    DiagonalGmm,
    DirichletMixture,
    EmConfig,
    MfaModel,
    fit_dmm_em,
    fit_gmm_em,
    fit_mfa_em,
    gmm_posteriors_loglik,
    mfa_posteriors_loglik,
)
from semfish.numerics import digamma
from semfish.oracle import central_difference, mc_fisher_info, relative_errors
from semfish.pipeline import ablation_table, run_ablation, run_pipeline
from semfish.synth import gen_oriented_bags, gen_synth_simplex


def report(n, ok, detail):
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {n}: {detail}"


def random_mfa(rng, K, D, R):
    return MfaModel(rng.dirichlet(np.ones(K)), rng.normal(size=(K, D)), rng.normal(0, 0.7, (K, D, R)),
                    rng.uniform(0.3, 1.5, D))


def test_criterion_01_gradient_oracle():
    t = time.perf_counter()
    rep = run_gradcheck(instances=20, seed=0, step=1e-5, tolerance=1e-5)
    elapsed = time.perf_counter() - t
    worst = max(g["max_rel_error"] for g in rep["groups"].values())
    groups = sorted(rep["groups"])
    ok = rep["passed"] and worst <= 1e-5 and elapsed <= 60.0 and len(groups) == 5
    report(1, ok, f"groups={groups} worst_rel_err={worst:.2e} time={elapsed:.1f}s")


def test_criterion_02_em_monotonicity():
    worst = np.inf
    for seed in range(10):
        rng = np.random.default_rng(seed)
        centers = rng.normal(0, 3, (3, 4))
        x = centers[rng.integers(3, size=200)] + rng.normal(size=(200, 4))
        p = rng.dirichlet(rng.uniform(0.5, 4.0, 3), 200)
        cfg = EmConfig(max_iter=50, tol=0.0, seed=seed)
        for m in (fit_gmm_em([DescriptorBag(x)], 3, cfg), fit_dmm_em([DescriptorBag(p)], 2, cfg),
                  fit_mfa_em([DescriptorBag(x)], 2, 2, cfg)):
            assert len(m.history) == 51
            worst = min(worst, float(np.min(np.diff(m.history))))
    report(2, worst >= -1e-8, f"10 datasets x 3 models x 50 iterations, worst step change={worst:.2e}")


def test_criterion_03_nesting():
    rng = np.random.default_rng(3)
    worst_post = worst_ll = 0.0
    nonzero = 0
    for _ in range(10):
        K, D, R = int(rng.integers(1, 4)), int(rng.integers(2, 7)), int(rng.integers(1, 3))
        g = DiagonalGmm(rng.dirichlet(np.ones(K)), rng.normal(size=(K, D)), rng.uniform(0.3, 2.0, (K, D)))
        m = MfaModel(g.weights, g.means, np.zeros((K, D, R)), g.variances)
        x = rng.normal(0, 2, (30, D))
        rg, lg = gmm_posteriors_loglik(g, x)
        rm, lm, _ = mfa_posteriors_loglik(m, x)
        worst_post = max(worst_post, float(np.max(np.abs(rg - rm))))
        worst_ll = max(worst_ll, abs(lg - lm))
        nonzero += int(np.count_nonzero(mfa_fs_lambda(m, x).vector))
    ok = worst_post <= 1e-10 and worst_ll <= 1e-10 and nonzero == 0
    report(3, ok, f"posterior err={worst_post:.1e} loglik err={worst_ll:.1e} nonzero loading scores={nonzero}")


def test_criterion_04_isserlis():
    t = time.perf_counter()
    m = MfaModel(np.array([1.0]), np.array([[0.3, -0.2]]), np.array([[[1.0], [0.6]]]), np.array([0.5, 0.8]))
    exact = mfa_fisher_scaling(m, means=False).loading_cov[0]
    est = mc_fisher_info(m, 0, "mfa_lambda", n_samples=10**6, seed=0)
    err_mfa = np.linalg.norm(est.cov - exact) / np.linalg.norm(exact)
    d = DirichletMixture(np.array([1.0]), np.array([[2.0, 3.0]]))
    exact = dmm_fisher_info(d).blocks[0]
    est = mc_fisher_info(d, 0, "dmm_alpha", n_samples=10**6, seed=1)
    err_dmm = np.linalg.norm(est.cov - exact) / np.linalg.norm(exact)
    elapsed = time.perf_counter() - t
    ok = err_mfa <= 0.02 and err_dmm <= 0.02 and elapsed <= 120.0
    report(4, ok, f"MFA rel Frobenius err={err_mfa:.4f} DMM rel err={err_dmm:.4f} time={elapsed:.1f}s")


def test_criterion_05_first_order_optimality():
    rng = np.random.default_rng(5)
    centers = rng.normal(0, 4, (3, 3))
    x = centers[rng.integers(3, size=600)] + rng.normal(size=(600, 3))
    cfg = EmConfig(max_iter=2000, tol=1e-12)
    g = fit_gmm_em([DescriptorBag(x)], 3, cfg)
    r_gmm = np.linalg.norm(gmm_score_mean(g, x)) / g.means.size
    m = fit_mfa_em([DescriptorBag(x)], 3, 1, cfg)
    r_mfa = np.linalg.norm(mfa_fs_mu(m, x).vector) / m.means.size
    p = rng.dirichlet([2.0, 5.0, 3.0, 1.0], 2000)
    d = fit_dmm_em([DescriptorBag(p)], 1, cfg)
    r_dmm = np.linalg.norm(dmm_score(d, p)) / d.alphas.size
    ok = max(r_gmm, r_mfa, r_dmm) <= 1e-3
    report(5, ok, f"score norm / parameter count: GMM={r_gmm:.1e} MFA={r_mfa:.1e} DMM={r_dmm:.1e}")


def test_criterion_06_semantic_embedding_gap():
    t = time.perf_counter()
    train, test, train_logits, test_logits = gen_synth_simplex(500, 2, descriptors_per_bag=50, seed=0)
    acc = {}
    for emb, a, b in (("raw", train, test), ("nu1", train, test), ("nu2", train_logits, test_logits)):
        cfg = PipelineConfig(embedding=emb, K=16, em_max_iter=100, seed=0)
        acc[emb] = run_pipeline(cfg, a, b)["mean_per_class_accuracy"]
    elapsed = time.perf_counter() - t
    gap = 100 * (max(acc["nu1"], acc["nu2"]) - acc["raw"])
    ok = gap >= 5.0 and elapsed <= 300.0
    accs = " ".join(f"{k}={100 * v:.1f}" for k, v in acc.items())
    report(6, ok, f"{accs} gap={gap:.1f} points time={elapsed:.1f}s")


def test_criterion_07_ablation_engine():
    rng = np.random.default_rng(7)
    bags = [DescriptorBag(rng.dirichlet([1.0, 2.0, 3.0], 25)) for _ in range(10)]
    dmm = fit_dmm_em(bags, 2, EmConfig(max_iter=30))
    logp = [DescriptorBag(embed_array(b.descriptors, "nu1"), embedding_tag="nu1") for b in bags]
    gmm = fit_gmm_em(logp, 2, EmConfig(max_iter=30))
    err = 0.0
    for bag in bags:
        err = max(err, np.max(np.abs(generic_fv(gmm_column(gmm), bag).vector
                                     - gmm_fv_mean(gmm, embed_array(bag.descriptors, "nu1")).vector)))
        err = max(err, np.max(np.abs(generic_fv(dmm_column(dmm), bag).vector - dmm_fv(dmm, bag).vector)))
    train, test, _, _ = gen_synth_simplex(100, 2, seed=7)
    rows = run_ablation(PipelineConfig(K=4, em_max_iter=50), train, test)
    hybrid = {"DMM | F^-1/2(alpha) | h(mu~)", "DMM | gauss | q(alpha)",
              "GMM | gauss | q(alpha~)", "GMM | F^-1/2(alpha~) | h(mu)"}
    ran = {r["row"] for r in rows if r["accuracy"] is not None}
    print("\n" + ablation_table(rows), end="")
    ok = err <= 1e-12 and hybrid <= ran and len(rows) == 8
    report(7, ok, f"generic vs dedicated max err={err:.1e} hybrid rows run={len(hybrid & ran)}/4")


def test_criterion_08_centroid_transfer():
    rng = np.random.default_rng(8)
    alphas = rng.uniform(0.1, 50.0, (6, 5))
    d = DirichletMixture(np.full(6, 1 / 6), alphas)
    back = gmm_to_dmm(dmm_to_gmm(d, variances=np.ones(5)))
    round_trip = float(np.max(np.abs(back.alphas - alphas)))
    residual = 0.0
    for _ in range(50):
        S = int(rng.integers(2, 9))
        a = rng.uniform(0.05, 100.0, S)
        mu = digamma(a) - digamma(a.sum())
        sol = solve_dirichlet_centroid(mu)
        residual = max(residual, float(np.max(np.abs(digamma(sol) - digamma(sol.sum()) - mu))))
    ok = round_trip <= 1e-6 and residual <= 1e-8
    report(8, ok, f"round trip err={round_trip:.1e} Newton residual={residual:.1e}")


def _fd_worst(p, clf, bags, labels, cfg, step=1e-6):
    _, grads, _ = loss_and_gradients(p, clf, bags, labels, cfg)
    worst = 0.0
    for name in PARAM_NAMES + CLASSIFIER_NAMES:

        def fn(value, name=name):
            q = p.copy()
            c = LinearClassifier(clf.weights.copy(), clf.bias.copy())
            if name == "W":
                c = LinearClassifier(value, c.bias)
            elif name == "b":
                c = LinearClassifier(c.weights, value)
            else:
                setattr(q, name, value)
            return loss_and_gradients(q, c, bags, labels, cfg)[0]

        base = {"W": clf.weights, "b": clf.bias}.get(name, getattr(p, name, None))
        worst = max(worst, float(relative_errors(grads[name], central_difference(fn, base, step)).max()))
    return worst


def test_criterion_09_mfafsnet():
    rng = np.random.default_rng(9)
    equiv = 0.0
    for _ in range(50):
        K, R = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        D = int(rng.integers(R + 1, 7))
        m = random_mfa(rng, K, D, R)
        x = rng.normal(0, 1.5, (int(rng.integers(1, 40)), D))
        ref = mfa_fs_lambda(m, x).vector
        got = layer_forward(layer_init_from_mfa(m), x).vector
        equiv = max(equiv, float(np.max(np.abs(got - ref)) / max(1.0, np.max(np.abs(ref)))))

    K, D, R, D_in = 2, 3, 2, 4
    a = rng.normal(size=(K, D, D))
    P = a @ np.transpose(a, (0, 2, 1)) / D + 0.5 * np.eye(D) + 0.1 * rng.normal(size=(K, D, D))
    p = MfaFsLayerParams(rng.normal(size=D_in) * 0.3, rng.normal(size=(D, D_in)) * 0.7, rng.normal(size=(K, D)),
                         rng.normal(size=(K, D, R)), P, rng.normal(size=(K, D, R)), rng.normal(size=K))
    clf = LinearClassifier(rng.normal(size=(3, K * D * R)), rng.normal(size=3) * 0.1)
    bags = [rng.normal(size=(int(rng.integers(3, 8)), D_in)) for _ in range(4)]
    fd = _fd_worst(p, clf, bags, [0, 1, 2, 1], TrainingConfig(lambda1=1.0, lambda2=1.0))

    bags = gen_oriented_bags(n_per_class=50, seed=0)
    labels = np.array([b.label for b in bags])
    p = layer_init_from_mfa(fit_mfa_em(bags, 2, 1, EmConfig(seed=0)))
    feats = np.stack([layer_features(p, b).vector for b in bags])
    state = finetune(p, train_linear(feats, labels, 1e-4, 20, 0), bags, labels,
                     TrainingConfig(lambda1=1.0, lambda2=1.0, epochs=10))
    tie, _ = tie_deviation(state.params)
    acc = state.history[-1]["train_accuracy"]
    ok = equiv <= 1e-6 and fd <= 1e-4 and tie <= 0.05 and acc >= 0.95
    report(9, ok, f"layer vs encoder err={equiv:.1e} FD rel err={fd:.1e} tie deviation={tie:.4f} "
                  f"train accuracy={acc:.3f}")


def test_criterion_10_dimensional_contract():
    rng = np.random.default_rng(10)
    D, K, R = 500, 50, 10
    m = MfaModel(np.full(K, 1 / K), rng.normal(size=(K, D)), rng.normal(0, 0.1, (K, D, R)), np.ones(D))
    enc = mfa_fs_lambda(m, rng.normal(size=(3, D)))
    ok = len(enc.vector) == 250_000 and enc.vector.shape == (D * K * R,)
    report(10, ok, f"encoding length={len(enc.vector)}")


@pytest.mark.parametrize("model", ["gmm", "mfa"])
def test_criterion_11_determinism(model, tmp_path):
    train, test, _, _ = gen_synth_simplex(15, 2, descriptors_per_bag=10, seed=11)
    cfg = PipelineConfig(model=model, K=3, R=1, em_max_iter=30, clf_epochs=5, ablation=model == "gmm")
    run_pipeline(cfg, train, test, tmp_path / "a", deterministic=True)
    run_pipeline(cfg, train, test, tmp_path / "b", deterministic=True)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = names == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    report(11, same, f"{model} pipeline, {len(names)} artifacts byte-identical across reruns")
