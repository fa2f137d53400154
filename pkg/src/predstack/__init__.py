"""Combination weights for Bayesian predictive distributions.

Stacking of predictive distributions, stacking of means, Pseudo-BMA(+) and
BMA, with PSIS-LOO supplying the leave-one-out predictive densities.
"""

__version__ = "0.1.0"

from .core import (
    ElpdSummary,
    Manifest,
    ManifestError,
    MissingLogMarginal,
    MissingPredMean,
    ModelDrawMatrix,
    WeightVector,
    load_manifest,
    save_manifest,
    validate_manifest,
)
from .psis import LooResult, ParetoFit, fit_gpd, loo_all, loo_lpd_point, smooth_ratios
from .scoring import MixtureDensity, ScoreSpec, crps, energy_score, log_score, quadratic_score
from .weights import (
    METHODS,
    StackingSolution,
    bma,
    combine_predictive,
    pseudo_bma,
    pseudo_bma_lognormal,
    pseudo_bma_plus,
    select_best,
    stack_logscore,
    stack_means,
)

__all__ = [
    "ElpdSummary",
    "LooResult",
    "METHODS",
    "Manifest",
    "ManifestError",
    "MissingLogMarginal",
    "MissingPredMean",
    "MixtureDensity",
    "ModelDrawMatrix",
    "ParetoFit",
    "ScoreSpec",
    "StackingSolution",
    "WeightVector",
    "bma",
    "combine_predictive",
    "crps",
    "energy_score",
    "fit_gpd",
    "load_manifest",
    "log_score",
    "loo_all",
    "loo_lpd_point",
    "pseudo_bma",
    "pseudo_bma_lognormal",
    "pseudo_bma_plus",
    "quadratic_score",
    "save_manifest",
    "select_best",
    "smooth_ratios",
    "stack_logscore",
    "stack_means",
    "validate_manifest",
]
