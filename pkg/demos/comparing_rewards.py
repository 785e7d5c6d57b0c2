"""
Measuring how far apart two rewards are
=======================================

A STARC distance compares rewards after mapping each one to a unit-norm
canonical form.  Rewards that order all policies identically are at distance 0,
and a reward and its negation are at distance 1.
"""

import numpy as np

from reward_geometry import random_mdp, random_reward
from reward_geometry.solvers import policy_order_oracle
from reward_geometry.starc import (
    CanonKind,
    MetricKind,
    NormKind,
    StarcConfig,
    canon_minimal_l2,
    nas_radius,
    regret_of_optimizing,
    starc_distance,
    worst_case_regret_lb,
)
from reward_geometry.transforms import apply_linear_scaling, apply_potential_shaping, decompose_difference

mdp = random_mdp(3, 2, 0.9, 0.0, seed=5)
r1 = random_reward(mdp, 1.0, seed=1)
r2 = random_reward(mdp, 1.0, seed=2)

###############################################################################
# The canonical form throws away the part of the reward that no policy
# ordering can detect.
c = canon_minimal_l2(r1, mdp)
print("norm before and after canonicalising:", np.linalg.norm(r1), np.linalg.norm(c))
print("difference explained by shaping plus redistribution:", decompose_difference(c, r1, mdp).in_ps_sr)

###############################################################################
# Distances between related rewards.
equivalent = apply_linear_scaling(apply_potential_shaping(r1, np.array([3.0, -1.0, 0.5]), mdp.gamma), 4.0)
print("d(r1, shaped and scaled r1) =", starc_distance(r1, equivalent, mdp))
print("ordering oracle agrees:", policy_order_oracle(mdp, r1, equivalent).name)
print("d(r1, -r1) =", starc_distance(r1, -r1, mdp))
print("d(r1, r2) =", starc_distance(r1, r2, mdp))

# Another configuration gives a different number but the same zero set.
angle = StarcConfig(CanonKind.VAL, NormKind.LINF, MetricKind.ANGLE)
print("angle-based distance (radians):", starc_distance(r1, r2, mdp, angle))

###############################################################################
# Regret: optimising the wrong reward costs a fraction of the achievable
# return range.
print("regret of optimising r2 when r1 is true:", regret_of_optimizing(mdp, r1, r2))
print("worst-case lower bound over policy moves r2 approves of:", worst_case_regret_lb(mdp, r1, r2))

###############################################################################
# Perturbations smaller than sin(2 arcsin eps) times the canonical norm keep
# the distance below eps.
for eps in (0.05, 0.1, 0.25):
    print(f"eps = {eps}: allowed relative perturbation {nas_radius(eps):.4f}")
