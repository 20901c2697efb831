"""Plausibly deniable synthetic data generation with differentially private generative models."""

__version__ = "0.1.0"

from .accounting import (DpBudget, InfeasibleBudget, adv_compose, amplify, model_budget, parameter_budget,
                         seq_compose, solve_per_query, structure_budget, theorem1_params)
from .data import Dataset, Schema, load_dataset, load_schema, parse_schema, partition_dataset
from .metrics import attr_distributions, model_error, tv_distance
from .params import ConditionalTable, ConfigurationKey, GenerativeModel
from .privacy import (PrivacyParams, ReleaseDecision, mechanism_step, partition_number,
                      privacy_test_deterministic, privacy_test_randomized)
from .structure import DependencyGraph, entropy, entropy_sensitivity, learn_structure
from .synthesis import SynthesisParams, record_probability, synthesize

__all__ = [
    "ConditionalTable", "ConfigurationKey", "Dataset", "DependencyGraph", "DpBudget", "GenerativeModel",
    "InfeasibleBudget", "PrivacyParams", "ReleaseDecision", "Schema", "SynthesisParams", "__version__",
    "adv_compose", "amplify", "attr_distributions", "entropy", "entropy_sensitivity", "learn_structure",
    "load_dataset", "load_schema", "mechanism_step", "model_budget", "model_error", "parameter_budget",
    "parse_schema", "partition_dataset", "partition_number", "privacy_test_deterministic",
    "privacy_test_randomized", "record_probability", "seq_compose", "solve_per_query", "structure_budget",
    "synthesize", "theorem1_params", "tv_distance",
]
