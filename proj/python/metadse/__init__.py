"""MetaDSE: a meta-learned attention surrogate plus a workload-adaptive mask
for cross-workload CPU design-space exploration."""

from ._core import (
    DataError,
    DesignSpace,
    MetaDSEError,
    NumericError,
    Predictor,
    RunConfig,
    UsageError,
    WorkloadSurface,
    ablate,
    evaluate,
    explained_variance,
    extract_mask,
    gen_data,
    gen_family,
    geomean,
    mape,
    mean_ci,
    pretrain,
    rmse,
    similarity,
    wasserstein_1d,
)

__all__ = [
    "DataError",
    "DesignSpace",
    "MetaDSEError",
    "NumericError",
    "Predictor",
    "RunConfig",
    "UsageError",
    "WorkloadSurface",
    "ablate",
    "evaluate",
    "explained_variance",
    "extract_mask",
    "gen_data",
    "gen_family",
    "geomean",
    "mape",
    "mean_ci",
    "pretrain",
    "rmse",
    "similarity",
    "wasserstein_1d",
]
