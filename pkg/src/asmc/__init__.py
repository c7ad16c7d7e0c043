"""Adaptive sequential Monte Carlo with online kernel and scaling selection."""

from .adaptation import KernelMenu, MenuEntry, TuningPopulation, init_population, score, update
from .errors import (
    AllWeightsDegenerate,
    ASMCError,
    CovarianceNotFactorizable,
    DimensionMismatch,
    EmptyMenu,
    InvalidScaling,
    LengthMismatch,
    TooFewRuns,
    UnknownDataset,
)
from .evaluation import GRID, PredictiveGrid, g_curve, predictive_density, standard_gaussian_curve, study, vpd
from .kernels import KernelKind, KernelSpec, MoveRecord, mh_step
from .models import (
    DATASETS,
    GaussianMeanTarget,
    MixtureSpec,
    MixtureTarget,
    Ordering,
    SequentialTarget,
    kalman_posterior,
    simulate_dataset,
    simulate_gaussian,
)
from .particles import ParticleSystem, WeightedMoments, ess, normalize_log_weights, weighted_moments
from .samplers import Method, RunConfig, RunTrace, amcmc_run, asmc_run, ibis_run, smc_run

__all__ = [
    "ASMCError", "AllWeightsDegenerate", "CovarianceNotFactorizable", "DimensionMismatch", "EmptyMenu",
    "InvalidScaling", "LengthMismatch", "TooFewRuns", "UnknownDataset",
    "KernelMenu", "MenuEntry", "TuningPopulation", "init_population", "score", "update",
    "GRID", "PredictiveGrid", "g_curve", "predictive_density", "standard_gaussian_curve", "study", "vpd",
    "KernelKind", "KernelSpec", "MoveRecord", "mh_step",
    "DATASETS", "GaussianMeanTarget", "MixtureSpec", "MixtureTarget", "Ordering", "SequentialTarget",
    "kalman_posterior", "simulate_dataset", "simulate_gaussian",
    "ParticleSystem", "WeightedMoments", "ess", "normalize_log_weights", "weighted_moments",
    "Method", "RunConfig", "RunTrace", "amcmc_run", "asmc_run", "ibis_run", "smc_run",
]
