"""Marginal and Empirical Bayes estimation of ARX models."""

from .errors import (EbarxError, InsufficientData, NotPositiveDefinite, RankDeficient,
                     UnstableModel)
from .estimators import (EstimateReport, Prior, bayes_posterior, eb_bias, eb_mse,
                         example51_curves, least_squares, marginal_estimate)
from .filters import (FilterState, FilterTrace, IllConditioned, backward_step,
                      estimate_hyperparameters, forward_step, recover_prior, run_backward,
                      run_forward)
from .model import (ArxSpec, Dataset, ParamWalkSpec, RegressorSet, build_regressors,
                    check_stability, simulate_fixed, simulate_varying)
from .numerics import inversion_lemma_lhs, spd_inverse

__version__ = "0.1.0"

__all__ = [
    "EbarxError", "InsufficientData", "NotPositiveDefinite", "RankDeficient", "UnstableModel",
    "EstimateReport", "Prior", "bayes_posterior", "eb_bias", "eb_mse", "example51_curves",
    "least_squares", "marginal_estimate", "FilterState", "FilterTrace", "IllConditioned",
    "backward_step", "estimate_hyperparameters", "forward_step", "recover_prior", "run_backward",
    "run_forward", "ArxSpec", "Dataset", "ParamWalkSpec", "RegressorSet", "build_regressors",
    "check_stability", "simulate_fixed", "simulate_varying", "inversion_lemma_lhs", "spd_inverse",
]
