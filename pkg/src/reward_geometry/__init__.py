"""Tabular MDP toolkit for transforming and comparing reward functions."""

from .behaviour import (
    BehaviouralModelConfig,
    ModelKind,
    boltzmann_policy,
    max_supportive_optimal,
    mce_policy,
    rollout,
)
from .mdp import Mdp, random_mdp, random_reward, reward_flat, reward_unflat, validate_mdp
from .solvers import (
    OrderVerdict,
    occupancy_measure,
    policy_evaluation,
    policy_order_oracle,
    policy_return,
    soft_value_iteration,
    value_iteration,
)
from .starc import StarcConfig, canon_minimal_l2, standardise, starc_distance
from .transforms import (
    apply_potential_shaping,
    apply_sprime_redistribution,
    decompose_difference,
    same_optimal_policies,
)

__all__ = [
    "BehaviouralModelConfig",
    "Mdp",
    "ModelKind",
    "OrderVerdict",
    "StarcConfig",
    "apply_potential_shaping",
    "apply_sprime_redistribution",
    "boltzmann_policy",
    "canon_minimal_l2",
    "decompose_difference",
    "max_supportive_optimal",
    "mce_policy",
    "occupancy_measure",
    "policy_evaluation",
    "policy_order_oracle",
    "policy_return",
    "random_mdp",
    "random_reward",
    "reward_flat",
    "reward_unflat",
    "rollout",
    "same_optimal_policies",
    "soft_value_iteration",
    "standardise",
    "starc_distance",
    "validate_mdp",
    "value_iteration",
]
