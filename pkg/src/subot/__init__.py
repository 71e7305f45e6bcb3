"""Substructure-level optimal transport for cross-domain adaptation.

Cluster each domain into Gaussian substructures, weight the source side by
a closed-form partial transport, couple the substructures with group-sparse
entropic transport, map them barycentrically and propagate labels.
"""

from .datamodel import (
    LabeledDataset,
    RawSignalWindow,
    ToyComponentSpec,
    ToyConfig,
    combine_axes,
    default_toy_config,
    extract_features,
    generate_toy,
    load_dataset_csv,
    split_target,
)
from .gmm import (
    MixtureModel,
    compute_bic,
    em_fit,
    fit_source_substructures,
    fit_target_substructures,
    kmeans_init,
    suggest_target_k,
)
from .ot import (
    Coupling,
    OtParams,
    barycentric_map,
    gcg_solve,
    group_lasso_value,
    partial_ot_source_weights,
    sinkhorn,
)
from .pipeline import (
    AdaptationConfig,
    AdaptationResult,
    evaluate_accuracy,
    nn_classify,
    otda_baseline,
    sot_adapt,
)
from .substructure import (
    CostMatrix,
    GaussianComponent,
    SubstructureSet,
    bures_diag_sq,
    cost_matrix_center,
    cost_matrix_gaussian,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig",
    "AdaptationResult",
    "CostMatrix",
    "Coupling",
    "GaussianComponent",
    "LabeledDataset",
    "MixtureModel",
    "OtParams",
    "RawSignalWindow",
    "SubstructureSet",
    "ToyComponentSpec",
    "ToyConfig",
    "barycentric_map",
    "bures_diag_sq",
    "combine_axes",
    "compute_bic",
    "cost_matrix_center",
    "cost_matrix_gaussian",
    "default_toy_config",
    "em_fit",
    "evaluate_accuracy",
    "extract_features",
    "fit_source_substructures",
    "fit_target_substructures",
    "gcg_solve",
    "generate_toy",
    "group_lasso_value",
    "kmeans_init",
    "load_dataset_csv",
    "nn_classify",
    "otda_baseline",
    "partial_ot_source_weights",
    "sinkhorn",
    "sot_adapt",
    "split_target",
    "suggest_target_k",
]
