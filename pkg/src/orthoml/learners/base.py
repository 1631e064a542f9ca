"""Uniform fit/predict interface for nuisance-function estimators."""

from __future__ import annotations

import numpy as np

from ..errors import NotFittedError, ValidationError


def as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError(f"expected a 2-D feature matrix, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("feature matrix contains non-finite values")
    return X


def as_target(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n:
        raise ValidationError(f"target has {y.shape[0]} rows, expected {n}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("target contains non-finite values")
    return y


class Learner:
    """Base class for all nuisance learners.

    Subclasses set ``kind`` ('regressor' or 'classifier'), list their
    hyperparameters in ``param_names`` and implement ``_fit``/``_predict``.
    Classifier predictions are raw probabilities P(target=1 | X); any
    trimming happens downstream in the score assembly, not here.
    """

    kind = "regressor"
    param_names: tuple = ()

    def __init__(self):
        self._fitted = False
        self._n_features = None

    # fit returns self; fitted learners are treated as immutable and may
    # be shared read-only for prediction.
    def fit(self, X, y):
        X = as_matrix(X)
        y = as_target(y, X.shape[0])
        if X.shape[0] < 1:
            raise ValidationError("cannot fit on an empty sample")
        if self.kind == "classifier" and not np.all((y == 0.0) | (y == 1.0)):
            raise ValidationError("classifier targets must be 0/1")
        self._fit(X, y)
        self._n_features = X.shape[1]
        self._fitted = True
        return self

    def predict(self, X) -> np.ndarray:
        if not self._fitted:
            raise NotFittedError(f"{type(self).__name__} used before fit")
        X = as_matrix(X)
        if X.shape[1] != self._n_features:
            raise ValidationError(
                f"predict expects {self._n_features} features, got {X.shape[1]}")
        return self._predict(X)

    def get_params(self) -> dict:
        return {name: getattr(self, name) for name in self.param_names}

    def clone(self, **overrides) -> "Learner":
        """Fresh unfitted copy, optionally with some hyperparameters replaced."""
        params = self.get_params()
        unknown = set(overrides) - set(params)
        if unknown:
            raise ValidationError(
                f"{type(self).__name__} has no hyperparameter(s) {sorted(unknown)}")
        params.update(overrides)
        return type(self)(**params)

    def reseeded(self, seed: int) -> "Learner":
        """Clone with a new RNG seed; a plain clone for deterministic learners."""
        if "seed" in self.param_names:
            return self.clone(seed=seed)
        return self.clone()

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"

    def _fit(self, X, y):
        raise NotImplementedError

    def _predict(self, X):
        raise NotImplementedError
