"""Distributional policy evaluation with the generalized Cramér loss."""
from .geometry import CramerGeometry, build_geometry
from .mdp import FiniteMDP, random_mdp, stationary_distribution, value_function
from .linear_fa import LinearModel, projected_process, sgd_policy_evaluation

__version__ = "0.1.0"

__all__ = [
    "CramerGeometry", "build_geometry", "FiniteMDP", "random_mdp",
    "stationary_distribution", "value_function", "LinearModel",
    "projected_process", "sgd_policy_evaluation",
]
