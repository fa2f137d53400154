"""Simulation experiments and brute-force oracles."""

from .gm import GmConfig, gen_gm, gm_bma_weight_average, gm_loglik_matrices, run_gm_experiment
from .linreg import (
    LinRegFit,
    LinRegPrior,
    exact_loo_oracle,
    fit_linreg_mcmc,
    log_marginal_likelihood,
)
from .oracles import gm_expected_bma_weights, grid_weight_oracle, simplex_lattice
from .regression import RegConfig, gen_beta, run_regression_experiment
from .report import compare, summarize, write_report

__all__ = [
    "GmConfig",
    "LinRegFit",
    "LinRegPrior",
    "RegConfig",
    "compare",
    "exact_loo_oracle",
    "fit_linreg_mcmc",
    "gen_beta",
    "gen_gm",
    "gm_bma_weight_average",
    "gm_expected_bma_weights",
    "gm_loglik_matrices",
    "grid_weight_oracle",
    "log_marginal_likelihood",
    "run_gm_experiment",
    "run_regression_experiment",
    "simplex_lattice",
    "summarize",
    "write_report",
]
