"""Bayesian inference for rankings drawn around category-level centers.

Observed rankings are modeled as a random group element composed onto a
per-category central ranking, with a Dirichlet prior on the perturbation pmf
whose weights are tied to one precision parameter through cycle counts.
The package provides collapsed-posterior enumeration for small instances,
Gibbs and group-move ("sandwich") samplers for general ones,
Rao-Blackwellized event estimators, convergence diagnostics, and a Monte
Carlo EM fit of the precision.
"""

from .dataio import (Dataset, DatasetSchema, Factor, dataset_from_counts,
                     default_schema, load_dataset, load_priors,
                     load_schema, save_dataset, save_schema)
from .diagnostics import acf, ks_distance, psrf, running_state_tv, trap_report, tv_distance
from .em import EmConfig, EmResult, precision_se, run_em
from .errors import ConfigError, DataError, NumericalError, RankMCMCError
from .estimators import (EstimateWithSE, RankEvent, batch_means_se,
                         rb_conditional, rb_joint, rb_marginal,
                         rb_marginal_table)
from .model import CategoryPriors, HyperParams, RankCounts, simulate_data
from .oracle import (ExactPosterior, compare_spectra, da_kernel,
                     enumerate_posterior, group_move_kernel,
                     local_move_kernel, log_marginal_likelihood,
                     noise_marginal_cdf, noise_marginal_pdf,
                     observed_information_exact, spectrum)
from .permutation import GroupTables, build_tables
from .samplers import (AlignmentCache, ChainConfig, ChainTrace,
                       conditional_rank_pmf, run_chain, run_chains)

__version__ = "1.0.0"

__all__ = [
    "Dataset", "DatasetSchema", "Factor", "dataset_from_counts",
    "default_schema", "load_dataset", "load_priors", "load_schema",
    "save_dataset", "save_schema",
    "acf", "ks_distance", "psrf", "running_state_tv", "trap_report",
    "tv_distance",
    "EmConfig", "EmResult", "precision_se", "run_em",
    "ConfigError", "DataError", "NumericalError", "RankMCMCError",
    "EstimateWithSE", "RankEvent", "batch_means_se", "rb_conditional",
    "rb_joint", "rb_marginal", "rb_marginal_table",
    "CategoryPriors", "HyperParams", "RankCounts", "simulate_data",
    "ExactPosterior", "compare_spectra", "da_kernel", "enumerate_posterior",
    "group_move_kernel", "local_move_kernel", "log_marginal_likelihood",
    "noise_marginal_cdf", "noise_marginal_pdf", "observed_information_exact",
    "spectrum",
    "GroupTables", "build_tables",
    "AlignmentCache", "ChainConfig", "ChainTrace", "conditional_rank_pmf",
    "run_chain", "run_chains",
    "__version__",
]
