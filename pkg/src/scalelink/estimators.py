"""Estimator wrappers around the three fit-shaped algorithms.

These follow the fit/predict/get_params conventions so the fits drop into
pipelines, grid searches, and cross-validation unchanged. Each wrapper stores
the underlying fitted object (law_, link_, map_) for direct inspection; the
inherited score() is the coefficient of determination in raw target space,
the same quantity the functional API reports.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import ValidationError
from .errormap import fit_error_map, predict_error
from .lawfit import FitConfig, fit_law_points, predict_loss
from .losslink import FREE, apply_link, fit_link_arrays


class ScalingLawRegressor(RegressorMixin, BaseEstimator):
    """Loss surface L(N, D) fit to columns X = [n_params, n_tokens], y = loss."""

    def __init__(self, form: str = "nested", config: FitConfig | None = None):
        self.form = form
        self.config = config

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 2:
            raise ValidationError(f"expected 2 columns (n_params, n_tokens), got {X.shape[1]}")
        self.law_ = fit_law_points(X[:, 0], X[:, 1], y, self.form, self.config)
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "law_")
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValidationError(f"expected 2 columns (n_params, n_tokens), got {X.shape[1]}")
        return predict_loss(self.law_, X[:, 0], X[:, 1])


class LossLinkRegressor(RegressorMixin, BaseEstimator):
    """Shifted power law from one loss to another; X is a single loss column.

    shift_y is a number for a known target shift or "free" to fit it.
    """

    def __init__(self, shift_x: float = 0.0, shift_y="free", kind: str = "general"):
        self.shift_x = shift_x
        self.shift_y = shift_y
        self.kind = kind

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValidationError(f"expected a single loss column, got {X.shape[1]}")
        shift_y = FREE if isinstance(self.shift_y, str) and self.shift_y == "free" else self.shift_y
        self.link_ = fit_link_arrays(X[:, 0], y, self.shift_x, shift_y, self.kind)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "link_")
        X = check_array(X)
        if X.shape[1] != 1:
            raise ValidationError(f"expected a single loss column, got {X.shape[1]}")
        return apply_link(self.link_, X[:, 0])


class ErrorMapRegressor(RegressorMixin, BaseEstimator):
    """Loss-to-error curve; X is a single train-loss column, y the error rates."""

    def __init__(self, shift_x: float = 0.0, use_floor: bool = False, softmin_alpha: float = 10.0):
        self.shift_x = shift_x
        self.use_floor = use_floor
        self.softmin_alpha = softmin_alpha

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValidationError(f"expected a single train-loss column, got {X.shape[1]}")
        self.map_ = fit_error_map(
            list(zip(X[:, 0], y)), self.shift_x, self.use_floor, self.softmin_alpha
        )
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "map_")
        X = check_array(X)
        if X.shape[1] != 1:
            raise ValidationError(f"expected a single train-loss column, got {X.shape[1]}")
        return np.asarray(predict_error(self.map_, X[:, 0]))
