"""Bag-of-semantics data model, embeddings and PCA.

A bag holds the per-patch descriptors of one image as an ``(n, dim)`` array.
Before embedding, rows are semantic multinomials (points on the simplex);
after embedding, they live in one of the natural-parameter or comparison
spaces named by ``EMBEDDINGS``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import softmax

DEFAULT_EPSILON = 1e-10
SIMPLEX_TOL = 1e-6

EMBEDDINGS = ("raw", "nu1", "nu2", "nu3", "sqrt", "von_mises")
# variants computable from probabilities alone
_PROB_EMBEDDINGS = ("raw", "nu1", "nu3", "sqrt", "von_mises")


@dataclass(frozen=True)
class SemanticDescriptor:
    """Posterior class-probability vector of one patch."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        check_simplex(p[None, :])
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class NaturalDescriptor:
    values: np.ndarray
    embedding_tag: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if self.embedding_tag not in EMBEDDINGS:
            raise ValueError(f"unknown embedding tag {self.embedding_tag!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("natural descriptor has non-finite entries")
        object.__setattr__(self, "values", v)


@dataclass
class DescriptorBag:
    """All descriptors of one sample.

    ``embedding_tag`` is ``"raw"`` for simplex-valued descriptors.
    """

    descriptors: np.ndarray
    label: int | None = None
    embedding_tag: str = "raw"

    def __post_init__(self):
        x = np.asarray(self.descriptors, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"a bag needs at least one descriptor, got shape {x.shape}")
        if self.embedding_tag not in EMBEDDINGS:
            raise ValueError(f"unknown embedding tag {self.embedding_tag!r}")
        self.descriptors = x

    @property
    def n(self):
        return self.descriptors.shape[0]

    @property
    def dim(self):
        return self.descriptors.shape[1]

    @classmethod
    def from_descriptors(cls, items, label=None):
        items = list(items)
        if not items:
            raise ValueError("empty bag")
        if isinstance(items[0], SemanticDescriptor):
            return cls(np.stack([d.probs for d in items]), label, "raw")
        tags = {d.embedding_tag for d in items}
        if len(tags) != 1:
            raise ValueError(f"mixed embedding tags in one bag: {sorted(tags)}")
        return cls(np.stack([d.values for d in items]), label, tags.pop())


def as_array(bag):
    """Descriptor matrix of a bag or a bare array."""
    if isinstance(bag, DescriptorBag):
        return bag.descriptors
    x = np.asarray(bag, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def stack_bags(bags):
    return np.concatenate([as_array(b) for b in bags], axis=0)


def check_simplex(p, tol=SIMPLEX_TOL):
    if np.any(p < 0.0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and nonnegative")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > tol):
        raise ValueError("probabilities must sum to one")


def embed_array(p, variant, epsilon=DEFAULT_EPSILON):
    """Row-wise embedding of an ``(n, S)`` array of probability vectors."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if variant == "nu2":
        raise ValueError(
            "nu2 cannot be recovered from probabilities; ingest the raw logits instead"
        )
    if variant not in _PROB_EMBEDDINGS:
        raise ValueError(f"unknown embedding variant {variant!r}")
    p = np.asarray(p, dtype=np.float64)
    if variant == "raw":
        return p.copy()
    if variant == "sqrt":
        return np.sqrt(p)
    if variant == "von_mises":
        t = np.log(p + epsilon) - np.log(epsilon)
        norm = np.linalg.norm(t, axis=-1, keepdims=True)
        return t / np.where(norm > 0, norm, 1.0)
    logp = np.log(np.maximum(p, epsilon))
    if variant == "nu1":
        return logp
    return logp - logp[..., -1:]


def embed(pi, variant, epsilon=DEFAULT_EPSILON):
    """Embed one semantic descriptor."""
    probs = pi.probs if isinstance(pi, SemanticDescriptor) else SemanticDescriptor(pi).probs
    return NaturalDescriptor(embed_array(probs[None, :], variant, epsilon)[0], variant)


def embed_bag(bag, variant, epsilon=DEFAULT_EPSILON):
    if bag.embedding_tag != "raw":
        raise ValueError(f"bag is already embedded ({bag.embedding_tag})")
    return DescriptorBag(embed_array(bag.descriptors, variant, epsilon), bag.label, variant)


def ingest_logits(logits):
    """Pre-softmax scores are already nu2 coordinates; keep them verbatim."""
    v = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("logits must be finite")
    return NaturalDescriptor(v, "nu2")


def ingest_logit_bag(logits, label=None):
    v = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("logits must be finite")
    return DescriptorBag(v, label, "nu2")


def to_simplex(nu2):
    """softmax of nu2 coordinates; the inverse of ``ingest_logits``."""
    vals = nu2.values if isinstance(nu2, NaturalDescriptor) else nu2
    return softmax(vals)


@dataclass(frozen=True)
class PcaProjection:
    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray = field(default=None, compare=False)

    @property
    def d_in(self):
        return self.basis.shape[1]

    @property
    def d_out(self):
        return self.basis.shape[0]

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.eye(dim))

    def transform(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d_in:
            raise ValueError(f"PCA expects dimension {self.d_in}, got {x.shape[-1]}")
        return (x - self.mean) @ self.basis.T


def fit_pca(bags, d_out):
    """Top-``d_out`` principal directions of the pooled descriptors."""
    x = stack_bags(bags)
    n, d_in = x.shape
    if d_out < 1 or d_out > d_in:
        raise ValueError(f"d_out must lie in [1, {d_in}], got {d_out}")
    if n < d_out:
        raise ValueError(f"need at least {d_out} descriptors, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d_out]
    basis = evecs[:, order].T
    # sign convention: largest-magnitude entry of each row positive
    idx = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(d_out), idx])
    basis = basis * np.where(signs == 0, 1.0, signs)[:, None]
    return PcaProjection(mean, np.ascontiguousarray(basis), evals[order])


def apply_pca(p, bag):
    return replace(bag, descriptors=p.transform(bag.descriptors))
