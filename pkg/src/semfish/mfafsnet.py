"""The MFA loading score as a trainable network layer.

Per bag of (embedded) descriptors y_i the layer computes::

    x_i   = B (y_i - m)                         PCA layer, trainable
    d_ik  = x_i - mu_k
    p_ik  = softmax_k(log kappa_k - 0.5 d_ik^T P_k d_ik)
    G_k   = sum_i p_ik (P_k d_ik (P_k d_ik)^T L_k - Omega_k)

and then signed power and L2 normalization, followed by a linear classifier.
With P_k = S_k^-1, Omega_k = S_k^-1 L_k and kappa_k = w_k |S_k|^-1/2 the
output is exactly the loading score of the MFA (same sign). Training
minimizes the mean one-vs-rest squared hinge plus::

    lambda1 sum_k ||Omega_k - P_k L_k||_F^2 + lambda2 sum_k ||P_k - P_k^T||_F^2

All gradients are written out by hand below.
"""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifier import LinearClassifier, ovr_targets
from .descriptors import PcaProjection, as_array
from .encoders.fisher import FisherEncoding
from .mixtures import mfa_derived
from .mixtures.io import dump_json, load_json, pack, unpack

log = logging.getLogger(__name__)

PARAM_NAMES = ("pca_mean", "pca_basis", "mu", "lam", "P", "Omega", "log_kappa")
CLASSIFIER_NAMES = ("W", "b")
POWER_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during fine-tuning."""


@dataclass
class MfaFsLayerParams:
    pca_mean: np.ndarray  # (D_in,)
    pca_basis: np.ndarray  # (D, D_in)
    mu: np.ndarray  # (K, D)
    lam: np.ndarray  # (K, D, R)
    P: np.ndarray  # (K, D, D)
    Omega: np.ndarray  # (K, D, R)
    log_kappa: np.ndarray  # (K,)

    @property
    def K(self):
        return self.mu.shape[0]

    @property
    def D(self):
        return self.mu.shape[1]

    @property
    def R(self):
        return self.lam.shape[2]

    def arrays(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return MfaFsLayerParams(**{k: v.copy() for k, v in self.arrays().items()})

    def to_dict(self):
        return {name: pack(v) for name, v in self.arrays().items()}

    @classmethod
    def from_dict(cls, doc):
        return cls(**{name: unpack(doc[name]) for name in PARAM_NAMES})


@dataclass(frozen=True)
class TrainingConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lr_classifier: float = 1e-3
    lr_other: float = 1e-5
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 10
    batch_size: int = 16
    power: float = 0.5
    seed: int = 0
    train_pca: bool = True

    def __post_init__(self):
        for name, value in asdict(self).items():
            if isinstance(value, (int, float)) and not isinstance(value, bool) and value < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 < self.power <= 1.0:
            raise ValueError("power must lie in (0, 1]")


def layer_init_from_mfa(m, pca=None):
    """Tie the layer to an EM-trained MFA: P = S^-1, Omega = S^-1 L, kappa = w |S|^-1/2."""
    pca = pca or PcaProjection.identity(m.D)
    if pca.d_out != m.D:
        raise ValueError(f"PCA output dimension {pca.d_out} does not match MFA dimension {m.D}")
    der = mfa_derived(m)
    P = np.empty((m.K, m.D, m.D))
    for k in range(m.K):
        s_inv = der.cov_inv(k)
        P[k] = 0.5 * (s_inv + s_inv.T)
    omega = np.einsum("kij,kjr->kir", P, m.loadings)
    return MfaFsLayerParams(
        np.array(pca.mean, dtype=np.float64),
        np.array(pca.basis, dtype=np.float64),
        np.array(m.means, dtype=np.float64),
        np.array(m.loadings, dtype=np.float64),
        P,
        omega,
        np.log(m.weights) - 0.5 * der.logdet,
    )


# -- forward ----------------------------------------------------------------------


def _bag_forward(p, y):
    x = (y - p.pca_mean) @ p.pca_basis.T
    delta = x[None] - p.mu[:, None, :]  # (K, n, D)
    q = np.einsum("kij,knj->kni", p.P, delta)  # P d
    logits = p.log_kappa[:, None] - 0.5 * np.sum(delta * q, axis=2)
    top = logits.max(axis=0)
    e = np.exp(logits - top)
    post = e / e.sum(axis=0)  # (K, n)
    M = np.einsum("kn,kni,knj->kij", post, q, q)
    s = post.sum(axis=1)
    G = M @ p.lam - s[:, None, None] * p.Omega
    return G, (y, delta, q, post, M, s)


def posteriors(p, bag):
    _, cache = _bag_forward(p, as_array(bag))
    return cache[3].T


def layer_forward(p, bag):
    """Raw layer output for one bag, as a (K, D, R) loading-score encoding."""
    y = as_array(bag)
    if y.shape[1] != p.pca_basis.shape[1]:
        raise ValueError(f"layer expects dimension {p.pca_basis.shape[1]}, got {y.shape[1]}")
    G, _ = _bag_forward(p, y)
    return FisherEncoding(G.ravel(), "mfa", "mfa_lambda", p.K, p.D, p.R)


def _normalize(v, power):
    u = np.sign(v) * np.abs(v) ** power
    r = np.linalg.norm(u)
    z = u / r if r > 0 else u
    return z, (v, u, r)


def _normalize_backward(dz, z, cache, power):
    v, u, r = cache
    if r == 0:
        return np.zeros_like(v)
    du = (dz - z * (z @ dz)) / r
    return du * power * np.maximum(np.abs(v), POWER_EPS) ** (power - 1.0)


def layer_features(p, bag, power=0.5):
    """Power- and L2-normalized layer output (the classifier input)."""
    e = layer_forward(p, bag)
    z, _ = _normalize(e.vector, power)
    return FisherEncoding(z, "mfa", "mfa_lambda", p.K, p.D, p.R, power, True)


# -- loss and gradients -----------------------------------------------------------


def _bag_backward(p, dG, cache):
    y, delta, q, post, M, s = cache
    grads = {}
    grads["lam"] = M @ dG
    grads["Omega"] = -s[:, None, None] * dG
    dM = dG @ np.transpose(p.lam, (0, 2, 1))
    dq = post[..., None] * np.einsum("kij,knj->kni", dM + np.transpose(dM, (0, 2, 1)), q)
    dpost = np.einsum("kni,kij,knj->kn", q, dM, q) - np.sum(dG * p.Omega, axis=(1, 2))[:, None]
    da = post * (dpost - np.sum(post * dpost, axis=0))
    grads["log_kappa"] = da.sum(axis=1)
    grads["P"] = np.einsum("kni,knj->kij", dq, delta) - 0.5 * np.einsum("kn,kni,knj->kij", da, delta, delta)
    sym = p.P + np.transpose(p.P, (0, 2, 1))
    ddelta = np.einsum("kji,knj->kni", p.P, dq) - 0.5 * da[..., None] * np.einsum("kij,knj->kni", sym, delta)
    grads["mu"] = -ddelta.sum(axis=1)
    dx = ddelta.sum(axis=0)
    grads["pca_basis"] = dx.T @ (y - p.pca_mean)
    grads["pca_mean"] = -(dx.sum(axis=0) @ p.pca_basis)
    return grads


def regularizers(p):
    """(sum_k ||Omega_k - P_k L_k||_F^2, sum_k ||P_k - P_k^T||_F^2)."""
    tie = p.Omega - p.P @ p.lam
    asym = p.P - np.transpose(p.P, (0, 2, 1))
    return float(np.sum(tie * tie)), float(np.sum(asym * asym))


def loss_and_gradients(p, clf, bags, labels, cfg):
    """Regularized squared-hinge loss over a batch and its gradients.

    Returns ``(loss, grads, info)``; ``grads`` has one entry per layer
    parameter plus ``W`` and ``b`` for the classifier.
    """
    bags = list(bags)
    labels = np.asarray(labels, dtype=np.int64)
    if not bags:
        raise ValueError("empty batch")
    if labels.size != len(bags):
        raise ValueError("need one label per bag")
    C = clf.n_classes
    if labels.min() < 0 or labels.max() >= C:
        raise ValueError("labels out of range")
    N = len(bags)
    grads = {name: np.zeros_like(v) for name, v in p.arrays().items()}
    grads["W"] = np.zeros_like(clf.weights)
    grads["b"] = np.zeros_like(clf.bias)
    targets = ovr_targets(labels, C)
    class_loss = 0.0
    correct = 0
    for bag, t in zip(bags, targets):
        y = as_array(bag)
        G, cache = _bag_forward(p, y)
        z, ncache = _normalize(G.ravel(), cfg.power)
        scores = clf.weights @ z + clf.bias
        correct += int(np.argmax(scores) == np.argmax(t))
        slack = np.maximum(0.0, 1.0 - t * scores)
        class_loss += float(np.sum(slack**2)) / N
        ds = -2.0 * t * slack / N
        grads["W"] += np.outer(ds, z)
        grads["b"] += ds
        dz = clf.weights.T @ ds
        dG = _normalize_backward(dz, z, ncache, cfg.power).reshape(G.shape)
        for name, g in _bag_backward(p, dG, cache).items():
            grads[name] += g
    r1, r2 = regularizers(p)
    tie = p.Omega - p.P @ p.lam
    asym = p.P - np.transpose(p.P, (0, 2, 1))
    grads["Omega"] += 2.0 * cfg.lambda1 * tie
    grads["P"] += -2.0 * cfg.lambda1 * tie @ np.transpose(p.lam, (0, 2, 1)) + 4.0 * cfg.lambda2 * asym
    grads["lam"] += -2.0 * cfg.lambda1 * np.transpose(p.P, (0, 2, 1)) @ tie
    loss = class_loss + cfg.lambda1 * r1 + cfg.lambda2 * r2
    info = {"class_loss": class_loss, "reg_tie": r1, "reg_sym": r2, "correct": correct}
    return loss, grads, info


# -- training ---------------------------------------------------------------------


@dataclass
class FinetuneState:
    params: MfaFsLayerParams
    classifier: LinearClassifier
    velocity: dict
    epoch: int = 0
    history: list = field(default_factory=list)

    def to_dict(self, cfg=None):
        return {
            "kind": "mfafsnet_checkpoint",
            "epoch": self.epoch,
            "params": self.params.to_dict(),
            "classifier": self.classifier.to_dict(),
            "velocity": {k: pack(v) for k, v in self.velocity.items()},
            "history": self.history,
            "config": asdict(cfg) if cfg is not None else None,
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("kind") != "mfafsnet_checkpoint":
            raise ValueError("not an MFAFSNet checkpoint")
        return cls(
            MfaFsLayerParams.from_dict(doc["params"]),
            LinearClassifier.from_dict(doc["classifier"]),
            {k: unpack(v) for k, v in doc["velocity"].items()},
            int(doc["epoch"]),
            list(doc["history"]),
        )


def save_checkpoint(state, path, cfg=None):
    dump_json(state.to_dict(cfg), path)


def load_checkpoint(path):
    return FinetuneState.from_dict(load_json(path))


def tie_deviation(p):
    """(||Omega - P L||_F / ||Omega||_F, ||P - P^T||_F) over all components."""
    r1, r2 = regularizers(p)
    norm = float(np.linalg.norm(p.Omega))
    return (math.sqrt(r1) / norm if norm > 0 else math.sqrt(r1)), math.sqrt(r2)


def smoothed_nonincreasing(history, window=3):
    """Whether the moving average of per-epoch loss never increases."""
    losses = np.array([h["loss"] for h in history])
    if losses.size < window:
        return bool(np.all(np.diff(losses) <= 0))
    smooth = np.convolve(losses, np.ones(window) / window, mode="valid")
    return bool(np.all(np.diff(smooth) <= 1e-12))


def new_state(params, clf):
    names = list(PARAM_NAMES) + list(CLASSIFIER_NAMES)
    arrays = {**params.arrays(), "W": clf.weights, "b": clf.bias}
    return FinetuneState(params.copy(), LinearClassifier(clf.weights.copy(), clf.bias.copy()),
                         {k: np.zeros_like(arrays[k]) for k in names})


def finetune(params, clf, bags, labels, cfg=None, state=None, checkpoint=None):
    """SGD with momentum and weight decay over the layer and the classifier.

    ``v <- momentum v + lr (g + weight_decay theta); theta <- theta - v``,
    with ``lr_classifier`` for W, b and ``lr_other`` for everything else.
    Pass ``state`` (from ``load_checkpoint``) to resume; ``checkpoint`` is a
    path rewritten after each epoch. Returns the final ``FinetuneState``.
    """
    cfg = cfg or TrainingConfig()
    bags = list(bags)
    labels = np.asarray(labels, dtype=np.int64)
    if len(bags) != labels.size or not bags:
        raise ValueError("need one label per bag and at least one bag")
    counts = np.bincount(labels, minlength=clf.n_classes)
    if np.any(counts == 0):
        raise ValueError(f"classes without training bags: {np.flatnonzero(counts == 0).tolist()}")
    state = state or new_state(params, clf)
    p, c = state.params, state.classifier
    frozen = set() if cfg.train_pca else {"pca_mean", "pca_basis"}
    n = len(bags)
    for epoch in range(state.epoch, cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        total = cls_total = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads, info = loss_and_gradients(p, c, [bags[i] for i in idx], labels[idx], cfg)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting at {start}")
            frac = idx.size / n
            total += loss * frac
            cls_total += info["class_loss"] * frac
            correct += info["correct"]
            targets = {**p.arrays(), "W": c.weights, "b": c.bias}
            for name, theta in targets.items():
                if name in frozen:
                    continue
                lr = cfg.lr_classifier if name in CLASSIFIER_NAMES else cfg.lr_other
                v = state.velocity[name]
                v *= cfg.momentum
                v += lr * (grads[name] + cfg.weight_decay * theta)
                theta -= v
        rel_tie, asym = tie_deviation(p)
        r1, r2 = regularizers(p)
        entry = {
            "epoch": epoch,
            "loss": total,
            "class_loss": cls_total,
            "reg_tie": r1,
            "reg_sym": r2,
            "tie_relative": rel_tie,
            "asymmetry": asym,
            "train_accuracy": correct / n,
        }
        state.history.append(entry)
        state.epoch = epoch + 1
        log.info("epoch %d loss %.6g class %.6g tie %.3g asym %.3g acc %.3f",
                 epoch, total, cls_total, rel_tie, asym, correct / n)
        if checkpoint is not None:
            save_checkpoint(state, checkpoint, cfg)
    return state


def predict(p, clf, bags, power=0.5):
    feats = np.stack([layer_features(p, b, power).vector for b in bags])
    return clf.predict(feats)
