"""Generic Fisher-vector pooling with swappable parts.

    V_k = (1/n) sum_i p(k | pi_i) gamma_k (nu(pi_i) - xi_k)

``p(k|.)`` assigns descriptors to components, ``nu`` embeds them, ``xi_k``
is the centroid and ``gamma_k`` scales the residual. The GMM-FV and DMM-FV
are two settings of these four parts; mixing them gives the hybrid
encodings used in the scaling/assignment ablation.
"""

from dataclasses import dataclass

import numpy as np

from ..descriptors import as_array, embed_array, DescriptorBag
from ..mixtures import DiagonalGmm, DirichletMixture, dmm_posteriors_loglik, gmm_posteriors_loglik
from ..numerics import softmax
from .fisher import FisherEncoding
from .information import dmm_fisher_info
from .transfer import dmm_to_gmm, gmm_to_dmm

ASSIGNMENTS = ("gaussian_h", "dirichlet_q")
SCALINGS = ("gauss_diag", "dmm_fim")


@dataclass(frozen=True)
class GenericFvSpec:
    """One choice for each of the four pooling parts.

    ``assign_model`` is a DiagonalGmm in embedded space (``gaussian_h``) or
    a DirichletMixture on the simplex (``dirichlet_q``). ``scale`` is
    ``(K, D)`` for ``gauss_diag`` (elementwise) or ``(K, D, D)`` for
    ``dmm_fim`` (matrix).
    """

    assignment: str
    assign_model: object
    embedding: str
    centroids: np.ndarray
    scaling: str
    scale: np.ndarray
    epsilon: float = 1e-10
    name: str = "generic"

    def __post_init__(self):
        if self.assignment not in ASSIGNMENTS:
            raise ValueError(f"unknown assignment {self.assignment!r}")
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {self.scaling!r}")
        expected = DiagonalGmm if self.assignment == "gaussian_h" else DirichletMixture
        if not isinstance(self.assign_model, expected):
            raise TypeError(f"{self.assignment} needs a {expected.__name__}")
        k = self.centroids.shape[0]
        want_ndim = 2 if self.scaling == "gauss_diag" else 3
        if self.assign_model.K != k or self.scale.shape[0] != k:
            raise ValueError("assignment, centroid and scaling component counts differ")
        if self.scale.ndim != want_ndim:
            raise ValueError(f"{self.scaling} scale must have {want_ndim} dimensions")


def _inputs(spec, bag):
    """(simplex points or None, embedded points) for a bag."""
    tag = bag.embedding_tag if isinstance(bag, DescriptorBag) else "raw"
    x = as_array(bag)
    if tag == "raw":
        return x, embed_array(x, spec.embedding, spec.epsilon)
    if tag != spec.embedding:
        raise ValueError(f"bag is embedded as {tag}, spec expects {spec.embedding}")
    simplex = softmax(x) if tag in ("nu1", "nu2", "nu3") else None
    return simplex, x


def generic_fv(spec, bag):
    simplex, nu = _inputs(spec, bag)
    if spec.assignment == "gaussian_h":
        resp, _ = gmm_posteriors_loglik(spec.assign_model, nu)
    else:
        if simplex is None:
            raise ValueError("dirichlet_q assignment needs simplex-valued descriptors")
        resp, _ = dmm_posteriors_loglik(spec.assign_model, simplex)
    n = nu.shape[0]
    pooled = (resp.T @ nu - resp.sum(axis=0)[:, None] * spec.centroids) / n
    if spec.scaling == "gauss_diag":
        blocks = spec.scale * pooled
    else:
        blocks = np.einsum("kij,kj->ki", spec.scale, pooled)
    return FisherEncoding(blocks.ravel(), "generic", "generic", spec.centroids.shape[0], nu.shape[1])


def gauss_scale(gmm):
    return 1.0 / (np.sqrt(gmm.weights)[:, None] * np.sqrt(gmm.variances))


def gmm_column(gmm, embedding="nu1", epsilon=1e-10):
    """The GMM-FV (mean component) as a generic spec."""
    return GenericFvSpec("gaussian_h", gmm, embedding, gmm.means, "gauss_diag",
                         gauss_scale(gmm), epsilon, "gmm")


def dmm_column(dmm, fim=None):
    """The DMM-FV as a generic spec (log embedding, f(alpha) centroids)."""
    fim = fim or dmm_fisher_info(dmm)
    return GenericFvSpec("dirichlet_q", dmm, "nu1", dmm.centroids(), "dmm_fim",
                         fim.inv_sqrt, dmm.epsilon, "dmm")


def ablation_specs(gmm=None, dmm=None, train_bags=None):
    """Scaling x assignment hybrids for each supplied base model.

    ``gmm`` must live in nu1 (log) space; its Dirichlet counterpart is
    obtained by centroid transfer. ``dmm`` is transferred to a GMM anchored
    at its centroids with the global variance of ``train_bags``. Returns an
    ordered dict ``{row name: spec}``; all rows of one base model share its
    centroids.
    """
    rows = {}
    if dmm is not None:
        g_t = dmm_to_gmm(dmm, train_bags)
        fim = dmm_fisher_info(dmm).inv_sqrt
        xi = dmm.centroids()
        eps = dmm.epsilon
        rows["DMM | F^-1/2(alpha) | q(alpha)"] = GenericFvSpec(
            "dirichlet_q", dmm, "nu1", xi, "dmm_fim", fim, eps, "dmm_fim_q")
        rows["DMM | F^-1/2(alpha) | h(mu~)"] = GenericFvSpec(
            "gaussian_h", g_t, "nu1", xi, "dmm_fim", fim, eps, "dmm_fim_h")
        rows["DMM | gauss | q(alpha)"] = GenericFvSpec(
            "dirichlet_q", dmm, "nu1", xi, "gauss_diag", gauss_scale(g_t), eps, "dmm_gauss_q")
        rows["DMM | gauss | h(mu~)"] = GenericFvSpec(
            "gaussian_h", g_t, "nu1", xi, "gauss_diag", gauss_scale(g_t), eps, "dmm_gauss_h")
    if gmm is not None:
        d_t = gmm_to_dmm(gmm)
        fim = dmm_fisher_info(d_t).inv_sqrt
        xi = gmm.means
        rows["GMM | gauss | h(mu)"] = GenericFvSpec(
            "gaussian_h", gmm, "nu1", xi, "gauss_diag", gauss_scale(gmm), name="gmm_gauss_h")
        rows["GMM | gauss | q(alpha~)"] = GenericFvSpec(
            "dirichlet_q", d_t, "nu1", xi, "gauss_diag", gauss_scale(gmm), name="gmm_gauss_q")
        rows["GMM | F^-1/2(alpha~) | h(mu)"] = GenericFvSpec(
            "gaussian_h", gmm, "nu1", xi, "dmm_fim", fim, name="gmm_fim_h")
        rows["GMM | F^-1/2(alpha~) | q(alpha~)"] = GenericFvSpec(
            "dirichlet_q", d_t, "nu1", xi, "dmm_fim", fim, name="gmm_fim_q")
    return rows
