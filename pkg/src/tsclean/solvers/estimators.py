from __future__ import annotations

from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .lasso import fit_weighted_lasso, select_lambda
from .quantile import fit_quantile


class WeightedLasso(RegressorMixin, BaseEstimator):
    """Lasso path with BIC (or fixed) penalty selection.

    Parameters
    ----------
    lambda_rule : "bic" or float
    n_lambdas : int
    min_ratio : float
    """

    def __init__(self, lambda_rule="bic", n_lambdas=50, min_ratio=1e-3):
        self.lambda_rule = lambda_rule
        self.n_lambdas = n_lambdas
        self.min_ratio = min_ratio

    def fit(self, X, y, sample_weight=None):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.path_ = fit_weighted_lasso(X, y, sample_weight,
                                        n_lambdas=self.n_lambdas,
                                        min_ratio=self.min_ratio)
        self.fit_ = select_lambda(self.path_, self.lambda_rule)
        self.coef_ = self.fit_.coefficients
        self.intercept_ = self.fit_.intercept
        self.alpha_ = self.fit_.lam
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = validate_data(self, X, reset=False)
        return self.intercept_ + X @ self.coef_


class LinearQuantileRegression(RegressorMixin, BaseEstimator):
    """Unpenalised linear quantile regression at level ``quantile``."""

    def __init__(self, quantile=0.5):
        self.quantile = quantile

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.fit_ = fit_quantile(X, y, self.quantile)
        self.coef_ = self.fit_.coefficients
        self.intercept_ = self.fit_.intercept
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = validate_data(self, X, reset=False)
        return self.intercept_ + X @ self.coef_
