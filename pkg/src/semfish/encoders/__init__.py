"""Fisher scores, Fisher vectors and the generic pooling template."""

from .fisher import (
    FisherEncoding,
    concatenate,
    dmm_fv,
    dmm_score,
    encode,
    gmm_fv_mean,
    gmm_fv_variance,
    gmm_score_mean,
    gmm_score_sigma,
    mfa_fs_lambda,
    mfa_fs_mu,
    mfa_fv_lambda,
    mfa_fv_mu,
    normalize_fv,
)
from .generic import GenericFvSpec, ablation_specs, dmm_column, generic_fv, gmm_column
from .information import (
    DmmFisherInfo,
    FisherInfoError,
    MfaFisherInfo,
    dmm_fim_block,
    dmm_fisher_info,
    inv_sqrt_psd,
    loading_score_covariance,
    mfa_fisher_scaling,
)
from .io import read_encodings, write_encodings
from .transfer import (
    TransferError,
    dmm_to_gmm,
    gmm_to_dmm,
    solve_dirichlet_centroid,
    transfer_centroids,
)

__all__ = [
    "FisherEncoding",
    "GenericFvSpec",
    "DmmFisherInfo",
    "MfaFisherInfo",
    "FisherInfoError",
    "TransferError",
    "gmm_score_mean",
    "gmm_score_sigma",
    "gmm_fv_mean",
    "gmm_fv_variance",
    "dmm_score",
    "dmm_fv",
    "dmm_fisher_info",
    "dmm_fim_block",
    "mfa_fs_mu",
    "mfa_fs_lambda",
    "mfa_fv_mu",
    "mfa_fv_lambda",
    "mfa_fisher_scaling",
    "loading_score_covariance",
    "inv_sqrt_psd",
    "generic_fv",
    "gmm_column",
    "dmm_column",
    "ablation_specs",
    "transfer_centroids",
    "gmm_to_dmm",
    "dmm_to_gmm",
    "solve_dirichlet_centroid",
    "concatenate",
    "encode",
    "normalize_fv",
    "read_encodings",
    "write_encodings",
]
