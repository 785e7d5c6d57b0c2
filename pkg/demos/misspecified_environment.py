"""
Getting the dynamics or the discount wrong
==========================================

Two rewards that look identical to a learner with one transition function
or discount can be opposites under another.  This script reproduces that
on random MDPs and on two small hand-built environments.
"""

import json

import numpy as np

from reward_geometry import random_mdp
from reward_geometry.behaviour import max_supportive_optimal
from reward_geometry.lab import (
    experiment_transfer_gamma,
    experiment_transfer_tau,
    gridworld_mdp,
    gridworld_rewards,
    three_state_flip,
)
from reward_geometry.starc import starc_distance

###############################################################################
# Torus gridworld.  With slippery moves the two rewards have the same
# expected value up to a factor of three, so they are equivalent.  With
# deterministic moves they pull in opposite horizontal directions.
r1, r2 = gridworld_rewards()
slippery, deterministic = gridworld_mdp(slippery=True), gridworld_mdp(slippery=False)
print("slippery distance:", starc_distance(r1, r2, slippery))
print("deterministic distance:", starc_distance(r1, r2, deterministic))
names = "URDL"
print("deterministic optimal moves from cell 0:",
      [names[a] for a in max_supportive_optimal(deterministic, r1)[0]], "vs",
      [names[a] for a in max_supportive_optimal(deterministic, r2)[0]])

###############################################################################
# Random dynamics: a direction with zero expectation under the first
# transition function is added to a reward with growing weight.
report = experiment_transfer_tau(mdp1_seed=3, trials=10, alpha_scale=1.0, seed=4, include_gridworld=False)
print(json.dumps(report.metrics, indent=2))

###############################################################################
# Discount: shaping that is harmless at gamma 0.9 flips the start-state
# choice of the three-state chain at gamma 0.5 once its weight passes 1.25.
print(three_state_flip(0.9, 0.5))
report = experiment_transfer_gamma(0.9, 0.5, random_mdp(4, 3, 0.9, 0.0, 23), trials=10, x_scale=1.0, seed=8)
print("verdict:", "pass" if report.verdict else "fail")
print({k: round(v, 6) for k, v in report.metrics.items()})
print("trial states:", np.unique([row["state"] for row in report.trial_metrics]))
