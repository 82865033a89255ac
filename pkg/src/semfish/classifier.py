"""One-vs-rest linear classifier with squared hinge loss.

Objective per class c (labels I = +1 for class c, -1 otherwise)::

    J(w_c, b_c) = (1/N) sum_i max(0, 1 - I_i (w_c . x_i + b_c))^2 + reg ||w_c||^2

Training runs seeded SGD and then polishes each class with a finite Newton
iteration (exact on the active set, since J is piecewise quadratic), so the
result is the unique minimizer rather than wherever SGD stopped.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .mixtures.io import pack, unpack

NEWTON_MAX_DIM = 4096


@dataclass
class LinearClassifier:
    weights: np.ndarray  # (C, De)
    bias: np.ndarray  # (C,)

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.size != self.weights.shape[0]:
            raise ValueError("bias length must equal the number of classes")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("classifier parameters must be finite")

    @property
    def n_classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    def decision_function(self, x):
        x = _features(x)
        if x.shape[1] != self.dim:
            raise ValueError(f"encoding length {x.shape[1]} does not match classifier ({self.dim})")
        return x @ self.weights.T + self.bias

    def predict(self, x):
        # np.argmax returns the first maximum: ties go to the lowest class index
        return np.argmax(self.decision_function(x), axis=1)

    def to_dict(self):
        return {"kind": "linear_classifier", "C": self.n_classes, "De": self.dim,
                "weights": pack(self.weights), "bias": pack(self.bias)}

    @classmethod
    def from_dict(cls, doc):
        if doc.get("kind") != "linear_classifier":
            raise ValueError("not a linear classifier document")
        return cls(unpack(doc["weights"]), unpack(doc["bias"]))


def _features(x):
    if isinstance(x, np.ndarray):
        return np.atleast_2d(x.astype(np.float64, copy=False))
    return np.stack([np.asarray(getattr(e, "vector", e), dtype=np.float64) for e in x])


def ovr_targets(y, n_classes):
    t = -np.ones((len(y), n_classes))
    t[np.arange(len(y)), y] = 1.0
    return t


def objective(w, b, x, t, reg):
    """Mean squared hinge summed over classes, plus reg * ||W||^2."""
    slack = np.maximum(0.0, 1.0 - t * (x @ w.T + b))
    return float(np.sum(slack**2) / x.shape[0] + reg * np.sum(w * w))


def _class_objective(theta, xa, t, reg):
    w, b = theta[:-1], theta[-1]
    slack = np.maximum(0.0, 1.0 - t * (xa[:, :-1] @ w + b))
    n = xa.shape[0]
    f = np.sum(slack**2) / n + reg * (w @ w)
    g = -2.0 * (xa.T @ (t * slack)) / n
    g[:-1] += 2.0 * reg * w
    return f, g


def _newton_polish(theta, xa, t, reg, max_iter=100):
    """Finite Newton for one class: solve the quadratic on the current active set."""
    n, p = xa.shape
    ridge = np.full(p, reg)
    ridge[-1] = 0.0
    f, _ = _class_objective(theta, xa, t, reg)
    for _ in range(max_iter):
        active = t * (xa @ theta) < 1.0
        if not np.any(active):
            # zero loss everywhere: shrink w, keep all margins; handled by line search
            active = np.ones(n, dtype=bool)
        a = xa[active]
        h = a.T @ a / n + np.diag(ridge)
        rhs = a.T @ t[active] / n
        try:
            target = np.linalg.solve(h, rhs)
        except np.linalg.LinAlgError:
            target = np.linalg.lstsq(h, rhs, rcond=None)[0]
        d = target - theta
        if np.max(np.abs(d)) <= 1e-15 * max(1.0, np.max(np.abs(theta))):
            break
        step = 1.0
        while step > 1e-10:
            cand = theta + step * d
            fc, _ = _class_objective(cand, xa, t, reg)
            if fc <= f:
                break
            step *= 0.5
        else:
            break
        if fc == f and step < 1.0:
            break
        theta, f = cand, fc
    return theta


def train_linear(x, y, reg=1e-4, epochs=20, seed=0, n_classes=None, lr=0.1, polish=True):
    """Train a one-vs-rest squared-hinge classifier.

    ``x`` is an (N, De) array or a list of encodings, ``y`` integer labels.
    Deterministic for a given seed.
    """
    x = _features(x)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] != y.size or y.size == 0:
        raise ValueError("need one label per encoding and at least one sample")
    c = int(n_classes if n_classes is not None else y.max() + 1)
    if y.min() < 0 or y.max() >= c:
        raise ValueError("labels out of range")
    counts = np.bincount(y, minlength=c)
    if np.any(counts == 0):
        raise ValueError(f"classes with zero samples: {np.flatnonzero(counts == 0).tolist()}")
    if reg < 0:
        raise ValueError("reg must be nonnegative")
    n, de = x.shape
    t = ovr_targets(y, c)
    w = np.zeros((c, de))
    b = np.zeros(c)
    rng = np.random.default_rng(seed)
    step = 0
    for epoch in range(epochs):
        eta = lr / (1.0 + epoch)
        for i in rng.permutation(n):
            slack = np.maximum(0.0, 1.0 - t[i] * (w @ x[i] + b))
            coef = -2.0 * t[i] * slack
            w -= eta * (np.outer(coef, x[i]) + 2.0 * reg * w)
            b -= eta * coef
            step += 1
    if polish:
        xa = np.hstack([x, np.ones((n, 1))])
        for k in range(c):
            theta = np.append(w[k], b[k])
            if de + 1 <= NEWTON_MAX_DIM:
                theta = _newton_polish(theta, xa, t[:, k], reg)
            else:
                res = minimize(_class_objective, theta, args=(xa, t[:, k], reg), jac=True,
                               method="L-BFGS-B", options={"maxiter": 500, "gtol": 1e-10})
                theta = res.x
            w[k], b[k] = theta[:-1], theta[-1]
    return LinearClassifier(w, b)


@dataclass
class Evaluation:
    per_class_accuracy: np.ndarray
    mean_per_class_accuracy: float
    confusion: np.ndarray  # rows: true class, columns: predicted class

    def to_dict(self):
        return {
            "per_class_accuracy": [float(v) for v in self.per_class_accuracy],
            "mean_per_class_accuracy": float(self.mean_per_class_accuracy),
            "confusion": self.confusion.astype(int).tolist(),
        }


def evaluate_predictions(pred, y, n_classes):
    pred = np.asarray(pred, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError("labels out of range")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y, pred), 1)
    support = conf.sum(axis=1)
    present = support > 0
    per_class = np.zeros(n_classes)
    per_class[present] = np.diag(conf)[present] / support[present]
    mean = float(per_class[present].mean()) if np.any(present) else 0.0
    return Evaluation(per_class, mean, conf)


def evaluate(clf, x, y):
    """Per-class recall, their unweighted mean, and the confusion matrix.

    Classes absent from ``y`` get accuracy 0 and are left out of the mean.
    """
    return evaluate_predictions(clf.predict(x), y, clf.n_classes)
