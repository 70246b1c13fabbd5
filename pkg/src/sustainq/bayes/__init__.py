"""Bayesian regressions of code-quality outcomes on sustainability predictors."""

from .diagnostics import Diagnostics, Hdi, diagnose, ess, hdi, hdi_count, mcse, split_rhat
from .inference import (
    FLIP_SET,
    GAUSSIAN_QUALITY,
    GROUP_PREDICTOR,
    HIGHER_IS_BETTER,
    POISSON_EXCLUDED,
    POISSON_QUALITY,
    Effect,
    ImpactDecision,
    InsufficientData,
    ModelConfig,
    ModelNotApplicable,
    ObservationSet,
    Posterior,
    PredictiveCheck,
    decide_from_hdi,
    decide_impact,
    direction_of,
    effect_gaussian,
    effect_poisson,
    fit,
    fit_gaussian,
    fit_poisson,
    model_kind,
    observations_from_arrays,
    posterior_predictive_check,
    prepare_observations,
    quality_impact,
    standardize,
)
from .models import GaussianLogModel, PoissonLogModel, Priors
from .sampler import SamplerRun, sample
