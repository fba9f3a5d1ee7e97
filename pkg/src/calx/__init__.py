"""calx: calibrated explanations for regression models.

Conformal predictive systems turn a point regressor into calibrated medians,
intervals and threshold probabilities; the explainer attributes those
calibrated quantities to feature rules.
"""

from .conformal import Cpd, Cps, PredictionSummary, build_cpd, cdf_at, fit_cps, interval
from .dataset import DataTable, FeatureSchema, Kind, SplitSpec, load_csv, split
from .difficulty import DifficultyEstimator, fit_difficulty
from .errors import CalxError
from .explainer import (
    CalibratedExplainerState,
    Explanation,
    FeatureRule,
    add_conjunctions,
    explain,
    explain_counterfactual,
    explain_factual,
    explain_probabilistic,
    initialize,
)
from .forest import ForestModel, PredictionTable, fit_forest
from .kernels import BACKEND
from .vennabers import ProbabilityTriple, VennAbers, pava, venn_abers

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CalibratedExplainerState", "CalxError", "Cpd", "Cps", "DataTable",
    "DifficultyEstimator", "Explanation", "FeatureRule", "FeatureSchema", "ForestModel",
    "Kind", "PredictionSummary", "PredictionTable", "ProbabilityTriple", "SplitSpec",
    "VennAbers", "add_conjunctions", "build_cpd", "cdf_at", "explain",
    "explain_counterfactual", "explain_factual", "explain_probabilistic", "fit_cps",
    "fit_difficulty", "fit_forest", "initialize", "interval", "load_csv", "pava",
    "split", "venn_abers",
]
