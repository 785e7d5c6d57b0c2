"""
Solving a small MDP and watching potential shaping move the values
===================================================================

Builds a random four-state MDP, solves it, then adds a potential-based
shaping term and checks how each quantity responds.
"""

import numpy as np

from reward_geometry import random_mdp, random_reward
from reward_geometry.solvers import (
    occupancy_measure,
    policy_evaluation,
    policy_return,
    soft_value_iteration,
    value_iteration,
)
from reward_geometry.transforms import apply_potential_shaping

np.set_printoptions(precision=4, suppress=True)

mdp = random_mdp(n_states=4, n_actions=2, gamma=0.9, sparsity=0.0, seed=1)
r = random_reward(mdp, scale=1.0, seed=2)

###############################################################################
# Optimal values.  ``optimal_actions`` lists every action whose advantage is
# within the tie tolerance of zero.
values = value_iteration(mdp, r)
print("V*:", values.v_star)
print("optimal actions:", values.optimal_actions)

###############################################################################
# The return of a uniform policy, computed from its occupancy measure and by evaluation.
uniform = np.full((mdp.n_states, mdp.n_actions), 0.5)
eta = occupancy_measure(mdp, uniform)
print("total occupancy:", eta.sum(), "=", 1 / (1 - mdp.gamma))
print("return via occupancy:", float(eta.reshape(-1) @ r.reshape(-1)))
print("return via evaluation:", policy_return(mdp, r, uniform))

###############################################################################
# Shaping with a potential ``phi`` lowers every Q-value in state ``s`` by
# ``phi[s]``.  Advantages, and therefore the optimal actions, do not move.
phi = np.array([1.0, -0.5, 2.0, 0.0])
shaped = apply_potential_shaping(r, phi, mdp.gamma)
before, after = policy_evaluation(mdp, r, uniform), policy_evaluation(mdp, shaped, uniform)
print("Q shift per state:", (before.q_pi - after.q_pi)[:, 0])
print("advantage change:", np.abs(after.a_pi - before.a_pi).max())
print("same optimal actions:", value_iteration(mdp, shaped).optimal_actions == values.optimal_actions)
print("return shift:", policy_return(mdp, r, uniform) - policy_return(mdp, shaped, uniform), "=", mdp.initial @ phi)

###############################################################################
# The soft Q-function used by maximum-causal-entropy models shifts the same way.
soft = soft_value_iteration(mdp, r, alpha=0.5).q_soft
soft_shaped = soft_value_iteration(mdp, shaped, alpha=0.5).q_soft
print("soft-Q shift per state:", (soft - soft_shaped)[:, 0])
