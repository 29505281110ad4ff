"""Confidence intervals for a treatment effect with possibly invalid instruments.

The searching interval inverts a hard-thresholded majority or plurality test
over a grid of effect values. The sampling interval repeats that search on
Gaussian redraws of the reduced-form estimates and takes the hull.
"""

from riv.data_io import Dataset, Schema, SummaryStats, load_csv, load_summary, write_csv
from riv.errors import (
    CovarianceError,
    DimensionError,
    MatrixError,
    NoRelevantInstrumentsError,
    ParseError,
    RIVError,
    SchemaError,
    SelectionError,
    SingularDesignError,
    TuningError,
    UnsupportedError,
    ValidationError,
)
from riv.pipeline import (
    AnalysisConfig,
    AnalysisResult,
    analyze,
    interval_union,
    oracle_tsls,
    post_selection_tsls,
)
from riv.reduced_form import ReducedFormFit, fit_from_summary, fit_ols, fit_robust
from riv.sampling import SamplingConfig, sampling_ci
from riv.searching import Interval, make_grid, searching_ci
from riv.selection import SelectionResult, select_relevant, tsht_selection

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "AnalysisResult",
    "CovarianceError",
    "Dataset",
    "DimensionError",
    "Interval",
    "MatrixError",
    "NoRelevantInstrumentsError",
    "ParseError",
    "RIVError",
    "ReducedFormFit",
    "SamplingConfig",
    "Schema",
    "SchemaError",
    "SelectionError",
    "SelectionResult",
    "SingularDesignError",
    "SummaryStats",
    "TuningError",
    "UnsupportedError",
    "ValidationError",
    "analyze",
    "fit_from_summary",
    "fit_ols",
    "fit_robust",
    "interval_union",
    "load_csv",
    "load_summary",
    "make_grid",
    "oracle_tsls",
    "post_selection_tsls",
    "sampling_ci",
    "searching_ci",
    "select_relevant",
    "tsht_selection",
    "write_csv",
]
