"""Nuisance-function learners behind one fit/predict interface."""

from ..errors import ValidationError
from .base import Learner
from .forest import ForestClassifier, ForestRegressor
from .linear import (LassoRegressor, LogisticClassifier, OlsRegressor,
                     RidgeRegressor, lasso_lambda_max)
from .tune import TuneResult, tune

_BUILTINS = {
    "ols": OlsRegressor,
    "ridge": RidgeRegressor,
    "lasso": LassoRegressor,
    "logistic": LogisticClassifier,
    "random_forest_reg": ForestRegressor,
    "random_forest_clf": ForestClassifier,
}


def builtin(name: str, params: dict | None = None, **kwargs) -> Learner:
    """Construct a built-in learner by name.

    Recognized names: ols, ridge, lasso, logistic, random_forest_reg,
    random_forest_clf.  Hyperparameters may be passed as a mapping or as
    keyword arguments.
    """
    if name not in _BUILTINS:
        raise ValidationError(
            f"unknown learner '{name}'; choose from {sorted(_BUILTINS)}")
    merged = dict(params or {})
    merged.update(kwargs)
    return _BUILTINS[name](**merged)


__all__ = [
    "Learner", "builtin", "tune", "TuneResult",
    "OlsRegressor", "RidgeRegressor", "LassoRegressor", "LogisticClassifier",
    "ForestRegressor", "ForestClassifier", "lasso_lambda_max",
]
