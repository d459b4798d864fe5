"""Optimistic value iteration with confounded observational data.

Backdoor (``run_dovi``) and frontdoor (``run_dovi_plus``) learners over tabular
confounded MDPs, with exact interventional oracles for evaluation.
"""

from .backdoor import run_baseline, run_dovi
from .data import OfflineDataset, gen_data, load_dataset, sample_offline_dataset
from .features import FeatureMap, build_features, check_realizability
from .frontdoor import run_dovi_plus
from .gallery import gallery, gallery_names
from .mdp import (ConfoundedMDP, causal_next_dist, causal_reward, conditional_next_dist, evaluate_policy,
                  frontdoor_next_dist, optimal_values, validate)
from .report import RegretReport
from .ridge import AlgoConfig, RidgeState
from .sweep import SweepSpec, run_sweep

__all__ = [
    "AlgoConfig", "ConfoundedMDP", "FeatureMap", "OfflineDataset", "RegretReport", "RidgeState", "SweepSpec",
    "build_features", "causal_next_dist", "causal_reward", "check_realizability", "conditional_next_dist",
    "evaluate_policy", "frontdoor_next_dist", "gallery", "gallery_names", "gen_data", "load_dataset",
    "optimal_values", "run_baseline", "run_dovi", "run_dovi_plus", "run_sweep", "sample_offline_dataset",
    "validate",
]
