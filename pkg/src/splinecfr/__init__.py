"""Continued-fraction regression with penalized additive spline layers."""

from .cfr_core import (
    AdditiveSplineModel,
    CFracModel,
    DepthLayer,
    FitConfig,
    LinearModel,
    auto_depth_truncate,
    compute_offset,
    deserialize,
    fit,
    select_knots,
    serialize,
    training_rmse_by_depth,
)
from .data_io import (
    Dataset,
    SplitPair,
    gen_gamma,
    gen_sinc,
    load_csv,
    minmax_apply,
    minmax_fit,
    split_out_of_domain,
    split_out_of_sample,
)
from .errors import DataError, ModelFormatError, SplineCfrError
from .evaluation import (
    MethodSummary,
    PredictionSet,
    RunReport,
    TopKTable,
    aggregate,
    cohen_kappa,
    count_beyond_training_max,
    kappa_agreement_label,
    mean_relative_error,
    rank_matrix,
    rmse,
    threshold_counts,
    top_k_table,
)
from .solver import least_squares, penalized_least_squares
from .spline_basis import (
    KnotVector,
    PenaltyBlock,
    build_knot_vector,
    design_matrix,
    eval_basis,
    eval_basis_matrix,
    penalty_block,
)

__version__ = "0.1.0"

__all__ = [
    "AdditiveSplineModel",
    "CFracModel",
    "DataError",
    "Dataset",
    "DepthLayer",
    "FitConfig",
    "KnotVector",
    "LinearModel",
    "MethodSummary",
    "ModelFormatError",
    "PenaltyBlock",
    "PredictionSet",
    "RunReport",
    "SplineCfrError",
    "SplitPair",
    "TopKTable",
    "aggregate",
    "auto_depth_truncate",
    "build_knot_vector",
    "cohen_kappa",
    "compute_offset",
    "count_beyond_training_max",
    "deserialize",
    "design_matrix",
    "eval_basis",
    "eval_basis_matrix",
    "fit",
    "gen_gamma",
    "gen_sinc",
    "kappa_agreement_label",
    "least_squares",
    "load_csv",
    "mean_relative_error",
    "minmax_apply",
    "minmax_fit",
    "penalized_least_squares",
    "penalty_block",
    "rank_matrix",
    "rmse",
    "select_knots",
    "serialize",
    "split_out_of_domain",
    "split_out_of_sample",
    "threshold_counts",
    "top_k_table",
    "training_rmse_by_depth",
]
