"""Grid search over learner hyperparameters by inner cross-validation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..resampling import make_folds
from .base import Learner, as_matrix, as_target


@dataclass(frozen=True)
class TuneResult:
    best_params: dict
    grid_points: tuple
    scores: np.ndarray  # mean inner-CV loss per grid point, grid order

    @property
    def best_score(self) -> float:
        return float(self.scores.min())


def _loss(kind: str, y_true: np.ndarray, y_pred: np.ndarray) -> float:
    if kind == "classifier":
        p = np.clip(y_pred, 1e-12, 1.0 - 1e-12)
        return float(-np.mean(y_true * np.log(p) + (1.0 - y_true) * np.log(1.0 - p)))
    return float(np.mean((y_true - y_pred) ** 2))


def tune(learner: Learner, X, y, grid: dict, inner_folds: int = 5,
         seed: int = 0) -> TuneResult:
    """Pick the grid point minimizing inner-CV mean squared error
    (regressors) or log loss (classifiers).

    The grid is a mapping name -> candidate values; points are visited in
    row-major order of the mapping, and ties keep the earlier point.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValidationError("hyperparameter grid must be non-empty")
    X = as_matrix(X)
    y = as_target(y, X.shape[0])

    names = list(grid)
    points = [dict(zip(names, combo))
              for combo in itertools.product(*(grid[name] for name in names))]
    scheme = make_folds(X.shape[0], inner_folds, 1, seed)

    scores = np.empty(len(points))
    for gi, params in enumerate(points):
        fold_losses = []
        for fold in range(scheme.k):
            tr = scheme.train_indices(0, fold)
            te = scheme.test_indices(0, fold)
            fitted = learner.clone(**params).fit(X[tr], y[tr])
            fold_losses.append(_loss(learner.kind, y[te], fitted.predict(X[te])))
        scores[gi] = np.mean(fold_losses)

    best = int(np.argmin(scores))  # argmin keeps the first point on ties
    return TuneResult(best_params=points[best], grid_points=tuple(points),
                      scores=scores)
