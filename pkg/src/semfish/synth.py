"""Synthetic bags of semantics on the 2-class simplex.

Each descriptor starts as a point x in the plane drawn from one of two
"object" class-conditionals p(x | y) proportional to exp(-d(x, m_y)), with
m_0 = -a u and m_1 = +a u. The descriptor is the object posterior
(pi, 1 - pi), pi = sigmoid(d(x, m_1) - d(x, m_0)); the logits are
(-d(x, m_0), -d(x, m_1)). Scene (bag) classes differ only in the
separation a of their object means, so the scene signal sits in how
confident the descriptors are, which the simplex compresses near its
corners.

geometry ``gaussian_l2``: d = 0.5 ||x - m||^2 (unit Gaussian)
geometry ``laplacian_l1``: d = ||x - m||_1 (unit Laplace per coordinate)
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .bagfile import write_bags
from .descriptors import DescriptorBag

GEOMETRIES = ("gaussian_l2", "laplacian_l1")
AXIS = np.array([1.0, 0.0])


@dataclass(frozen=True)
class SynthSettings:
    n_per_class: int = 500
    classes: int = 2
    geometry: str = "gaussian_l2"
    descriptors_per_bag: int = 50
    base_separation: float = 1.5
    separation_step: float = 0.35
    seed: int = 0


def distances(x, means, geometry):
    """(n, Y) matrix d(x_i, m_y)."""
    diff = x[:, None, :] - means[None, :, :]
    if geometry == "gaussian_l2":
        return 0.5 * np.sum(diff * diff, axis=2)
    if geometry == "laplacian_l1":
        return np.sum(np.abs(diff), axis=2)
    raise ValueError(f"unknown geometry {geometry!r}")


def semantic_pairs(x, means, geometry):
    """(probabilities, logits) for points x under object means ``means``."""
    d = distances(x, means, geometry)
    logits = -d
    diff = d[:, 1] - d[:, 0]
    # two separate sigmoids keep the small entry accurate
    return np.stack([expit(diff), expit(-diff)], axis=1), logits


def _sample_points(rng, means, labels, geometry):
    centers = means[labels]
    if geometry == "gaussian_l2":
        return centers + rng.standard_normal(centers.shape)
    return centers + rng.laplace(0.0, 1.0, centers.shape)


def _split(rng, s):
    bags, logit_bags = [], []
    for c in range(s.classes):
        a = s.base_separation + s.separation_step * c
        means = np.stack([-a * AXIS, a * AXIS])
        for _ in range(s.n_per_class):
            y = rng.integers(0, 2, s.descriptors_per_bag)
            x = _sample_points(rng, means, y, s.geometry)
            probs, logits = semantic_pairs(x, means, s.geometry)
            bags.append(DescriptorBag(probs, c))
            logit_bags.append(DescriptorBag(logits, c, "nu2"))
    return bags, logit_bags


def gen_synth_simplex(n_per_class=500, classes=2, geometry="gaussian_l2", seed=0, **kw):
    """Returns (train, test, train_logits, test_logits) lists of bags.

    Train and test use independent Philox streams spawned from ``seed``.
    """
    s = SynthSettings(n_per_class, classes, geometry, seed=seed, **kw)
    if s.classes < 2:
        raise ValueError("need at least two classes")
    if s.geometry not in GEOMETRIES:
        raise ValueError(f"unknown geometry {s.geometry!r}")
    if s.n_per_class < 1 or s.descriptors_per_bag < 1:
        raise ValueError("need at least one bag per class and one descriptor per bag")
    streams = np.random.SeedSequence(s.seed).spawn(2)
    train, train_logits = _split(np.random.Generator(np.random.Philox(streams[0])), s)
    test, test_logits = _split(np.random.Generator(np.random.Philox(streams[1])), s)
    return train, test, train_logits, test_logits


SYNTH_FILES = ("train.bosf", "test.bosf", "train_logits.bosf", "test_logits.bosf")


def write_synth(out_dir, n_per_class=500, classes=2, geometry="gaussian_l2", seed=0, **kw):
    """Write the four bag files into ``out_dir`` and return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    sets = gen_synth_simplex(n_per_class, classes, geometry, seed, **kw)
    paths = [os.path.join(out_dir, name) for name in SYNTH_FILES]
    for path, bags in zip(paths, sets):
        write_bags(path, bags, 2)
    return dict(zip(("train", "test", "train_logits", "test_logits"), paths))


def gen_oriented_bags(n_per_class=50, classes=2, dim=4, descriptors_per_bag=30, spread=3.0,
                      noise=0.5, seed=0):
    """Bags whose classes differ in the dominant direction of their descriptors.

    Class c draws descriptors ``t u_c + e`` with ``t ~ N(0, spread^2)``,
    ``e ~ N(0, noise^2 I)`` and a random unit direction ``u_c``. The classes
    share mean and overall scale, so only second-order structure (what the
    loading score measures) separates them.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    dirs = rng.standard_normal((classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    bags = []
    for c in range(classes):
        for _ in range(n_per_class):
            t = spread * rng.standard_normal((descriptors_per_bag, 1))
            x = t * dirs[c] + noise * rng.standard_normal((descriptors_per_bag, dim))
            bags.append(DescriptorBag(x, c))
    return bags
