"""Command-line driver.

Every command accepts ``--config FILE`` (JSON, see ``semfish.config``),
repeated ``--set key=value`` overrides and the global ``--seed``,
``--threads`` and ``--deterministic`` flags.
"""

import argparse
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .classifier import LinearClassifier, evaluate, train_linear
from .config import ConfigError, load_config
from .descriptors import apply_pca
from .encoders import read_encodings, write_encodings
from .gradcheck import KINDS, run_gradcheck
from .mfafsnet import (
    TrainingConfig,
    finetune,
    layer_features,
    layer_init_from_mfa,
    load_checkpoint,
    save_checkpoint,
)
from .mixtures import MfaModel
from .mixtures.io import dump_json, load_json, load_model, save_model
from .pipeline import (
    PipelineError,
    check_labels,
    embed_all,
    encode_bags,
    fit_mixture,
    fit_projection,
    load_bags,
    load_pca,
    metrics_json,
    run_pipeline,
    save_pca,
)
from .synth import GEOMETRIES, write_synth

log = logging.getLogger("semfish")


def _prepare(cfg, path, pca_path=None):
    bags = embed_all(cfg, load_bags(cfg, path))
    if pca_path:
        pca = load_pca(pca_path)
        bags = [apply_pca(pca, b) for b in bags]
    return bags


def _emit(doc, out=None):
    text = metrics_json(doc) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_synth(args, cfg):
    paths = write_synth(args.out_dir, args.n_per_class, args.classes, args.geometry, cfg.seed,
                        descriptors_per_bag=args.descriptors)
    _emit(paths)


def cmd_train_mixture(args, cfg):
    bags = embed_all(cfg, load_bags(cfg, args.train))
    os.makedirs(args.out_dir, exist_ok=True)
    pca = fit_projection(cfg, bags)
    if pca is not None:
        save_pca(pca, os.path.join(args.out_dir, "pca.json"))
        bags = [apply_pca(pca, b) for b in bags]
    model = fit_mixture(cfg, bags)
    save_model(model, os.path.join(args.out_dir, "model.json"))
    _emit({"model": cfg.model, "K": cfg.components, "iterations": len(model.history),
           "loglik": model.history[-1] if model.history else None,
           "pca_dim": None if pca is None else pca.d_out})


def cmd_encode(args, cfg):
    model = load_model(args.model)
    bags = _prepare(cfg, args.bags, args.pca)
    encs = encode_bags(cfg, model, bags)
    labels = [-1 if b.label is None else b.label for b in bags]
    write_encodings(args.out, encs, labels)
    _emit({"count": len(encs), "length": len(encs[0]), "variant": cfg.encoder_variant})


def _labeled(path):
    encs, labels = read_encodings(path)
    x = np.stack([e.vector for e in encs])
    return x, labels


def cmd_train_classifier(args, cfg):
    x, y = _labeled(args.encodings)
    if np.any(y < 0):
        raise ValueError("training encodings must all be labeled")
    clf = train_linear(x, y, cfg.reg, cfg.clf_epochs, cfg.seed, args.classes)
    dump_json(clf.to_dict(), args.out)
    _emit(evaluate(clf, x, y).to_dict() | {"split": "train"})


def cmd_evaluate(args, cfg):
    clf = LinearClassifier.from_dict(load_json(args.classifier))
    x, y = _labeled(args.encodings)
    _emit(evaluate(clf, x, y).to_dict(), args.out)


def training_config(cfg):
    return TrainingConfig(lambda1=cfg.lambda_, lambda2=cfg.lambda_, lr_classifier=cfg.lr_classifier,
                          lr_other=cfg.lr_other, momentum=cfg.momentum,
                          weight_decay=cfg.weight_decay, epochs=cfg.ft_epochs,
                          batch_size=cfg.batch_size, power=cfg.power, seed=cfg.seed)


def cmd_finetune(args, cfg):
    tcfg = training_config(cfg)
    bags = embed_all(cfg, load_bags(cfg, args.train))
    labels = check_labels(bags, "training")
    if args.resume:
        state = load_checkpoint(args.resume)
        params, clf = state.params, state.classifier
    else:
        model = load_model(args.model)
        if not isinstance(model, MfaModel):
            raise ValueError("finetune needs an MFA background model")
        pca = load_pca(args.pca) if args.pca else None
        params = layer_init_from_mfa(model, pca)
        if args.classifier:
            clf = LinearClassifier.from_dict(load_json(args.classifier))
        else:
            feats = np.stack([layer_features(params, b, cfg.power).vector for b in bags])
            clf = train_linear(feats, labels, cfg.reg, cfg.clf_epochs, cfg.seed)
        state = None
    state = finetune(params, clf, bags, labels, tcfg, state=state, checkpoint=args.out)
    save_checkpoint(state, args.out, tcfg)
    _emit({"epochs": state.epoch, "history": state.history})


def cmd_gradcheck(args, cfg):
    kinds = KINDS if args.kind == "all" else (args.kind,)
    report = run_gradcheck(kinds, args.instances, cfg.seed, args.step, args.tolerance)
    _emit(report, args.out)
    return 0 if report["passed"] else 1


def cmd_pipeline(args, cfg):
    metrics = run_pipeline(cfg, args.train, args.test, args.out_dir, args.deterministic)
    _emit(metrics)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (value parsed as JSON)")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--threads", type=int, default=None, help="maximum BLAS threads")
    common.add_argument("--deterministic", action="store_true",
                        help="single-threaded numerics and timing-free artifacts")
    common.add_argument("--log-level", default="WARNING")

    parser = argparse.ArgumentParser(prog="semfish", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic simplex bags")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--geometry", choices=GEOMETRIES, default="gaussian_l2")
    p.add_argument("--descriptors", type=int, default=50, help="descriptors per bag")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-mixture", parents=[common], help="fit PCA and a background mixture")
    p.add_argument("--train", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train_mixture)

    p = sub.add_parser("encode", parents=[common], help="write normalized Fisher encodings")
    p.add_argument("--model", required=True)
    p.add_argument("--pca")
    p.add_argument("--bags", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train-classifier", parents=[common], help="train the linear classifier")
    p.add_argument("--encodings", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("evaluate", parents=[common], help="mean per-class accuracy and confusion")
    p.add_argument("--classifier", required=True)
    p.add_argument("--encodings", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("finetune", parents=[common], help="fine-tune the MFA loading-score layer")
    p.add_argument("--train", required=True)
    p.add_argument("--model", help="MFA model (required unless --resume)")
    p.add_argument("--pca")
    p.add_argument("--classifier", help="initial classifier; default trains one on frozen features")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("gradcheck", parents=[common], help="analytic scores vs finite differences")
    p.add_argument("--kind", choices=KINDS + ("all",), default="all")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("pipeline", parents=[common], help="run every stage end to end")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    if args.command == "finetune" and not (args.model or args.resume):
        print("error: finetune needs --model or --resume", file=sys.stderr)
        return 2
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        threads = 1 if args.deterministic else args.threads
        with threadpool_limits(limits=threads):
            return args.func(args, cfg) or 0
    except (ConfigError, PipelineError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
