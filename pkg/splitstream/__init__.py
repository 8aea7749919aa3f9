"""Dynamic splitting-tree collision resolution: simulation and exact analysis."""

import logging

__version__ = "0.3.0"

from .analytic import (  # noqa: E402
    asymptotic_slope,
    assemble_matrix,
    binary_K,
    det_M,
    e_series,
    eval_phi,
    find_lambda_c,
    fluctuation_F,
    mean_size_series,
    renewal_slope,
    row_D,
    solve_constants,
)
from .models import ArrivalLaw, BranchingLaw, SeriesParams, SplittingMeasure  # noqa: E402
from .splitting import derive_splitting_measure, validate_assumptions  # noqa: E402
from .tracker import ValidationHarness  # noqa: E402

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "ArrivalLaw",
    "BranchingLaw",
    "SeriesParams",
    "SplittingMeasure",
    "ValidationHarness",
    "asymptotic_slope",
    "assemble_matrix",
    "binary_K",
    "derive_splitting_measure",
    "det_M",
    "e_series",
    "eval_phi",
    "find_lambda_c",
    "fluctuation_F",
    "mean_size_series",
    "renewal_slope",
    "row_D",
    "solve_constants",
    "validate_assumptions",
]
