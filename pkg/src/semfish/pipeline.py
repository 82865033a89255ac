"""End-to-end run: embed -> PCA -> mixture -> encode -> normalize -> classify -> evaluate.

``run_pipeline`` writes every intermediate artifact into an output
directory. With ``deterministic`` set, wall-clock timings are logged but
kept out of the files, so two runs with the same inputs and config produce
byte-identical artifacts.
"""

import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from .bagfile import read_bags
from .classifier import evaluate, train_linear
from .descriptors import PcaProjection, apply_pca, embed_bag, fit_pca, to_simplex
from .encoders import ablation_specs, encode, generic_fv, normalize_fv, write_encodings
from .encoders.transfer import TransferError
from .mixtures import EmConfig, fit_dmm_em, fit_gmm_em, fit_mfa_em
from .mixtures.io import dump_json, load_json, pack, save_model, unpack

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class _Timer:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - start
            log.info("stage %s: %.3fs", name, self.timings[name])


def save_pca(pca, path):
    dump_json({"kind": "pca", "mean": pack(pca.mean), "basis": pack(pca.basis)}, path)


def load_pca(path):
    doc = load_json(path)
    if doc.get("kind") != "pca":
        raise ValueError(f"{path} is not a PCA document")
    return PcaProjection(unpack(doc["mean"]), unpack(doc["basis"]))


def em_config(cfg):
    return EmConfig(max_iter=cfg.em_max_iter, tol=cfg.em_tol, seed=cfg.seed,
                    shared_noise=cfg.shared_noise)


def check_labels(bags, name):
    labels = [b.label for b in bags]
    if any(lab is None for lab in labels):
        raise ValueError(f"{name} bags must all be labeled")
    labels = np.asarray(labels, dtype=np.int64)
    if np.unique(labels).size < 2:
        raise ValueError(f"{name} set has a single class; classification needs at least two")
    return labels


def load_bags(cfg, path):
    """nu2 runs read logit files; all other embeddings read simplex files."""
    return read_bags(path, "nu2" if cfg.embedding == "nu2" else "raw")


def embed_all(cfg, bags):
    if cfg.embedding in ("raw", "nu2"):
        return list(bags)
    return [embed_bag(b, cfg.embedding, cfg.epsilon) for b in bags]


def fit_projection(cfg, bags):
    """PCA fitted on the training bags, or None when it would not reduce."""
    dim = bags[0].descriptors.shape[1]
    if cfg.model == "dmm" or cfg.pca_dim == 0 or cfg.pca_dim >= dim:
        return None
    return fit_pca(bags, cfg.pca_dim)


def fit_mixture(cfg, bags):
    em = em_config(cfg)
    if cfg.model == "gmm":
        return fit_gmm_em(bags, cfg.components, em)
    if cfg.model == "dmm":
        return fit_dmm_em(bags, cfg.components, em)
    return fit_mfa_em(bags, cfg.components, cfg.R, em)


def encode_bags(cfg, model, bags):
    variant = cfg.encoder_variant
    return [normalize_fv(encode(model, b, variant), cfg.power) for b in bags]


def _features(encodings):
    return np.stack([e.vector for e in encodings])


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def run_pipeline(cfg, train, test, out_dir=None, deterministic=True):
    """Run every stage; ``train``/``test`` are bag lists or bag-file paths.

    Returns the metrics dictionary (also written to ``metrics.json``).
    """
    timer = _Timer()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    with timer.stage("load"):
        train = load_bags(cfg, train) if isinstance(train, (str, os.PathLike)) else list(train)
        test = load_bags(cfg, test) if isinstance(test, (str, os.PathLike)) else list(test)
        y_train = check_labels(train, "training")
        y_test = np.asarray([b.label for b in test], dtype=np.int64)
        n_classes = int(max(y_train.max(), y_test.max()) + 1)
    with timer.stage("embed"):
        train_e = embed_all(cfg, train)
        test_e = embed_all(cfg, test)
    with timer.stage("pca"):
        pca = fit_projection(cfg, train_e)
        if pca is not None:
            train_e = [apply_pca(pca, b) for b in train_e]
            test_e = [apply_pca(pca, b) for b in test_e]
    with timer.stage("mixture"):
        model = fit_mixture(cfg, train_e)
    with timer.stage("encode"):
        enc_train = encode_bags(cfg, model, train_e)
        enc_test = encode_bags(cfg, model, test_e)
    with timer.stage("classifier"):
        clf = train_linear(_features(enc_train), y_train, cfg.reg, cfg.clf_epochs, cfg.seed, n_classes)
    with timer.stage("evaluate"):
        ev_test = evaluate(clf, _features(enc_test), y_test)
        ev_train = evaluate(clf, _features(enc_train), y_train)
    metrics = {
        "mean_per_class_accuracy": ev_test.mean_per_class_accuracy,
        "per_class_accuracy": ev_test.to_dict()["per_class_accuracy"],
        "confusion": ev_test.to_dict()["confusion"],
        "train_mean_per_class_accuracy": ev_train.mean_per_class_accuracy,
        "n_train": len(train),
        "n_test": len(test),
        "n_classes": n_classes,
        "embedding": cfg.embedding,
        "model": cfg.model,
        "K": cfg.components,
        "encoder": cfg.encoder_variant,
        "pca_dim": None if pca is None else pca.d_out,
        "encoding_length": len(enc_train[0]),
        "em_iterations": len(model.history),
    }
    if cfg.ablation:
        with timer.stage("ablation"):
            metrics["ablation"] = run_ablation(cfg, train, test, n_classes)
    if not deterministic:
        metrics["timings"] = dict(timer.timings)
    if out_dir is not None:
        with timer.stage("write"):
            _write_text(os.path.join(out_dir, "config.json"), cfg.to_json())
            if pca is not None:
                save_pca(pca, os.path.join(out_dir, "pca.json"))
            save_model(model, os.path.join(out_dir, "model.json"))
            write_encodings(os.path.join(out_dir, "train.fenc"), enc_train, y_train)
            write_encodings(os.path.join(out_dir, "test.fenc"), enc_test, y_test)
            dump_json(clf.to_dict(), os.path.join(out_dir, "classifier.json"))
            dump_json(metrics, os.path.join(out_dir, "metrics.json"))
            if "ablation" in metrics:
                _write_text(os.path.join(out_dir, "ablation.txt"), ablation_table(metrics["ablation"]))
    return metrics


def _simplex_bags(bags):
    if bags and bags[0].embedding_tag == "nu2":
        return [replace(b, descriptors=to_simplex(b.descriptors), embedding_tag="raw") for b in bags]
    return bags


def run_ablation(cfg, train, test, n_classes=None):
    """Scaling x assignment hybrids for a DMM and a log-space GMM.

    Both models are fitted on the training simplex bags (the GMM on their
    nu1 embedding) with ``cfg.components`` components. Rows whose centroid
    transfer has no positive solution are reported with an error.
    """
    train = _simplex_bags(train)
    test = _simplex_bags(test)
    y_train = check_labels(train, "training")
    y_test = np.asarray([b.label for b in test], dtype=np.int64)
    n_classes = n_classes or int(max(y_train.max(), y_test.max()) + 1)
    em = em_config(cfg)
    dmm = fit_dmm_em(train, cfg.components, em)
    gmm = fit_gmm_em([embed_bag(b, "nu1", cfg.epsilon) for b in train], cfg.components, em)
    rows = []
    specs = dict(ablation_specs(dmm=dmm, train_bags=train))
    try:
        specs.update(ablation_specs(gmm=gmm))
    except TransferError as exc:
        for name in ("GMM | gauss | h(mu)", "GMM | gauss | q(alpha~)",
                     "GMM | F^-1/2(alpha~) | h(mu)", "GMM | F^-1/2(alpha~) | q(alpha~)"):
            rows.append({"row": name, "accuracy": None, "error": str(exc)})
    for name, spec in specs.items():
        f_train = _features([normalize_fv(generic_fv(spec, b), cfg.power) for b in train])
        f_test = _features([normalize_fv(generic_fv(spec, b), cfg.power) for b in test])
        clf = train_linear(f_train, y_train, cfg.reg, cfg.clf_epochs, cfg.seed, n_classes)
        rows.append({"row": name, "accuracy": evaluate(clf, f_test, y_test).mean_per_class_accuracy,
                     "error": None})
    order = {name: i for i, name in enumerate(
        ["DMM | F^-1/2(alpha) | q(alpha)", "DMM | F^-1/2(alpha) | h(mu~)", "DMM | gauss | q(alpha)",
         "DMM | gauss | h(mu~)", "GMM | gauss | h(mu)", "GMM | gauss | q(alpha~)",
         "GMM | F^-1/2(alpha~) | h(mu)", "GMM | F^-1/2(alpha~) | q(alpha~)"])}
    rows.sort(key=lambda r: order.get(r["row"], len(order)))
    return rows


def ablation_table(rows):
    lines = [f"{'model | scaling | assignment':<40} accuracy"]
    for r in rows:
        acc = "failed: " + r["error"] if r["accuracy"] is None else f"{100 * r['accuracy']:.2f}"
        lines.append(f"{r['row']:<40} {acc}")
    return "\n".join(lines) + "\n"


def metrics_json(metrics):
    return json.dumps(metrics, indent=1, sort_keys=True)
