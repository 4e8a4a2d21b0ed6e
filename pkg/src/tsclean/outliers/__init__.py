"""Feature-based outlier detection with Gaussian mixtures."""
from .detect import (DetectOptions, OutlierDetector, OutlierReport, attribute_causes,
                     detect_outliers, identify_outlier_component, seed_outlier_component)
from .features import FEATURE_NAMES, FeatureMatrix, compute_features
from .mixture import FAMILIES, MixtureModel, fit_gmm_em, hierarchical_init

__all__ = [
    "DetectOptions", "FAMILIES", "FEATURE_NAMES", "FeatureMatrix", "MixtureModel",
    "OutlierDetector", "OutlierReport", "attribute_causes", "compute_features",
    "detect_outliers", "fit_gmm_em", "hierarchical_init", "identify_outlier_component",
    "seed_outlier_component",
]
