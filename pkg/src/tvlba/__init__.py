"""Hierarchical accumulator models with block-to-block parameter dynamics.

Fits static and time-varying two-accumulator race models to choice/RT
data by particle Metropolis-within-Gibbs, and compares model variants
via importance-sampling-squared marginal likelihoods.
"""

from .chainstore import load_chain, save_chain
from .data import Dataset, export_dataset, ingest_csv
from .designs import DesignMap, load_design
from .dynamics import GroupParams, ModelKind, Priors
from .experiments import (SimDesign, SummarySeries, default_generator,
                          model_recovery, parameter_recovery,
                          posterior_predictive, simulate_dataset,
                          summary_series)
from .is2 import IS2Config, MarginalLikelihoodEstimate, is2_estimate
from .pmwg import ChainResult, MCMCConfig, run_pmwg
from .smc import ParticleDegeneracyError

__version__ = "0.1.0"

__all__ = [
    "ChainResult", "Dataset", "DesignMap", "GroupParams", "IS2Config",
    "MCMCConfig", "MarginalLikelihoodEstimate", "ModelKind",
    "ParticleDegeneracyError", "Priors", "SimDesign", "SummarySeries",
    "default_generator", "export_dataset", "ingest_csv", "is2_estimate",
    "load_chain", "load_design", "model_recovery", "parameter_recovery",
    "posterior_predictive", "run_pmwg", "save_chain", "simulate_dataset",
    "summary_series", "__version__",
]
