"""Evidential composite-likelihood analysis of correlated binary family traits."""

from .evidence import (
    InformationEstimates,
    SupportInterval,
    adjusted_lr,
    adjustment_factor,
    estimate_information,
    support_interval,
)
from .likelihood import CLKind, check_gradient, cl_eval, maximize_cl
from .misleading import bump, bump_max, estimate_misleading, fwer_bound
from .model import (
    FamilyData,
    InvalidArgumentError,
    ModelParams,
    Pedigree,
    RelationshipClass,
    marginal_prob,
)
from .plackett import PairMargins, joint_prob, pair_correlation
from .profile import ProfileCurve, profile_cl
from .simulate import SimConfig, simulate_dataset, solve_latent_rho

__version__ = "0.1.0"

__all__ = [
    "CLKind", "FamilyData", "InformationEstimates", "InvalidArgumentError", "ModelParams",
    "PairMargins", "Pedigree", "ProfileCurve", "RelationshipClass", "SimConfig",
    "SupportInterval", "adjusted_lr", "adjustment_factor", "bump", "bump_max", "check_gradient",
    "cl_eval", "estimate_information", "estimate_misleading", "fwer_bound", "joint_prob",
    "marginal_prob", "maximize_cl", "pair_correlation", "profile_cl", "simulate_dataset",
    "solve_latent_rho", "support_interval",
]
