"""Uncertainty-driven action quality assessment (UD-AQA) core bindings."""

from ._core import (
    DataError,
    NumericError,
    evaluate,
    fisher_z_average,
    generate_synthetic,
    middle3_sum,
    predict,
    relative_l2,
    spearman,
    train,
)

__all__ = [
    "DataError",
    "NumericError",
    "evaluate",
    "fisher_z_average",
    "generate_synthetic",
    "middle3_sum",
    "predict",
    "relative_l2",
    "spearman",
    "train",
]
