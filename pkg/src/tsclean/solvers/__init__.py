"""Regression engines: weighted lasso (mean target) and quantile regression."""
from ._design import DesignMatrix, FitResult
from .lasso import fit_weighted_lasso, kkt_residual, lambda_max, select_lambda
from .quantile import fit_quantile, pinball_loss
from .estimators import LinearQuantileRegression, WeightedLasso

__all__ = [
    "DesignMatrix",
    "FitResult",
    "LinearQuantileRegression",
    "WeightedLasso",
    "fit_quantile",
    "fit_weighted_lasso",
    "kkt_residual",
    "lambda_max",
    "pinball_loss",
    "select_lambda",
]
