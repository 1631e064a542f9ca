"""Cross-fitted orthogonal-score estimation of causal parameters.

The package estimates a low-dimensional causal parameter in partially
linear and interactive regression models (with and without instruments)
while the confounding adjustment is delegated to machine-learning
nuisance models.  Orthogonal scores plus K-fold cross-fitting keep the
estimate first-order insensitive to nuisance estimation error, and the
stored linear score components support sandwich standard errors, a
multiplier bootstrap and simultaneous inference as post-processing.
"""

from .data import DmlData, check_binary_treatment
from .dgp import (DgpConfig, IrmTruth, PlrTruth, make_irm_data, make_plr_data,
                  naive_plugin_estimator, orthogonal_no_split_estimator)
from .engine import (BootstrapResult, FitResult, FitSpec, aggregate_repetitions,
                     bootstrap, fit, joint_confint, joint_critical_value,
                     p_adjust, solve_theta_dml1, solve_theta_dml2,
                     standard_error)
from .errors import (IdentificationError, LearnerError, NotFittedError,
                     ScoreLinearityError, ValidationError)
from .learners import (ForestClassifier, ForestRegressor, LassoRegressor,
                       Learner, LogisticClassifier, OlsRegressor,
                       RidgeRegressor, builtin, tune)
from .resampling import (FoldScheme, external_folds, folds_from_json,
                         make_folds, no_split_scheme)
from .scores import (NuisancePredictions, ScoreComponents, iivm_score,
                     irm_score, orthogonality_diagnostic, pliv_score,
                     plr_score, trim_propensity)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "DmlData", "check_binary_treatment",
    "FoldScheme", "make_folds", "external_folds", "folds_from_json",
    "no_split_scheme",
    "Learner", "builtin", "tune", "OlsRegressor", "RidgeRegressor",
    "LassoRegressor", "LogisticClassifier", "ForestRegressor",
    "ForestClassifier",
    "ScoreComponents", "NuisancePredictions", "plr_score", "irm_score",
    "pliv_score", "iivm_score", "trim_propensity", "orthogonality_diagnostic",
    "FitSpec", "FitResult", "fit", "solve_theta_dml1", "solve_theta_dml2",
    "standard_error", "aggregate_repetitions", "bootstrap", "BootstrapResult",
    "joint_confint", "joint_critical_value", "p_adjust",
    "DgpConfig", "PlrTruth", "IrmTruth", "make_plr_data", "make_irm_data",
    "naive_plugin_estimator", "orthogonal_no_split_estimator",
    "ValidationError", "NotFittedError", "LearnerError",
    "IdentificationError", "ScoreLinearityError",
]
