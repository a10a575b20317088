"""Sampling, moment oracles and bound constants for the continuous random energy model on a binary tree."""

from .profile import (
    BUILTIN_PROFILES,
    ConcaveHull,
    CovarianceProfile,
    beta_c,
    concave_hull,
    free_energy,
    load_profile,
    max_growth_rate,
    validate_profile,
)
from .sampler import TreeSample, sample_coupled_walks, sample_tree, sample_walk
from .partition import BarrierParams, log_partition, log_truncated_partition

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_PROFILES",
    "BarrierParams",
    "ConcaveHull",
    "CovarianceProfile",
    "TreeSample",
    "beta_c",
    "concave_hull",
    "free_energy",
    "load_profile",
    "log_partition",
    "log_truncated_partition",
    "max_growth_rate",
    "sample_coupled_walks",
    "sample_tree",
    "sample_walk",
    "validate_profile",
]
