"""Robust preprocessing of univariate and multivariate time series."""
__version__ = "0.1.0"

from .bench import StudyConfig, generate_mar_mask, run_study, summarize
from .decompose import Decomposition, RobustDecomposer, robust_decompose
from .frame import IngestionError, MissingSpec, SeriesFrame, apply_missing_spec, load_csv, write_csv
from .missing import MissingValueImputer, default_lag_set, model_missing_data
from .outliers import DetectOptions, OutlierDetector, OutlierReport, detect_outliers
from .pipeline import (AutoCleaner, CleaningResult, auto_data_cleaning, impute_modelled_data,
                       read_report, write_report)

__all__ = [
    "AutoCleaner",
    "CleaningResult",
    "Decomposition",
    "DetectOptions",
    "IngestionError",
    "MissingSpec",
    "MissingValueImputer",
    "OutlierDetector",
    "OutlierReport",
    "RobustDecomposer",
    "SeriesFrame",
    "StudyConfig",
    "apply_missing_spec",
    "auto_data_cleaning",
    "default_lag_set",
    "detect_outliers",
    "generate_mar_mask",
    "impute_modelled_data",
    "load_csv",
    "model_missing_data",
    "read_report",
    "robust_decompose",
    "run_study",
    "summarize",
    "write_csv",
    "write_report",
]
