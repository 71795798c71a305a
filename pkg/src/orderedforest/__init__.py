"""Ordered Forest: random-forest estimation of ordered choice probabilities.

Class probabilities of an ordered outcome are estimated by differencing
regression forests fitted to cumulative class indicators. The package also
holds marginal effects with weight-based standard errors, an ordered-logit
baseline, simulated benchmark designs and accuracy measures.
"""

__version__ = "0.1.0"

from .data import Dataset, load_covariates, load_csv, split_folds, split_halves
from .effects import EffectsTable, marginal_effects
from .forest import Forest, ForestParams, extract_weights, fit_forest, predict
from .metrics import cross_validate, mse, mse_row, rps, rps_row, score
from .ologit import OlogitModel, fit_ologit, ologit_marginal_effects, predict_proba_ologit
from .ordered import OrderedForestModel, fit, load_model, predict_proba, save_model

__all__ = [
    "Dataset", "load_csv", "load_covariates", "split_folds", "split_halves",
    "ForestParams", "Forest", "fit_forest", "predict", "extract_weights",
    "OrderedForestModel", "fit", "predict_proba", "save_model", "load_model",
    "EffectsTable", "marginal_effects",
    "OlogitModel", "fit_ologit", "predict_proba_ologit", "ologit_marginal_effects",
    "rps", "mse", "rps_row", "mse_row", "score", "cross_validate",
]
