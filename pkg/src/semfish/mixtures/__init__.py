"""Background mixture models trained by EM."""

from .base import EmConfig, MixtureError
from .dmm import (
    DirichletMixture,
    dirichlet_expected_log,
    dmm_posteriors_loglik,
    fit_dmm_em,
    log_simplex,
)
from .gmm import DiagonalGmm, fit_gmm_em, gmm_posteriors_loglik
from .io import load_model, model_from_dict, model_to_dict, save_model
from .mfa import MfaDerived, MfaEStats, MfaModel, fit_mfa_em, mfa_derived, mfa_posteriors_loglik


def posteriors_loglik(m, bag):
    """Responsibilities and log-likelihood for any model kind."""
    if isinstance(m, DiagonalGmm):
        return gmm_posteriors_loglik(m, bag)
    if isinstance(m, DirichletMixture):
        return dmm_posteriors_loglik(m, bag)
    resp, ll, _ = mfa_posteriors_loglik(m, bag)
    return resp, ll


__all__ = [
    "EmConfig",
    "MixtureError",
    "DiagonalGmm",
    "DirichletMixture",
    "MfaModel",
    "MfaDerived",
    "MfaEStats",
    "gmm_posteriors_loglik",
    "dmm_posteriors_loglik",
    "mfa_posteriors_loglik",
    "posteriors_loglik",
    "fit_gmm_em",
    "fit_dmm_em",
    "fit_mfa_em",
    "mfa_derived",
    "dirichlet_expected_log",
    "log_simplex",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]
