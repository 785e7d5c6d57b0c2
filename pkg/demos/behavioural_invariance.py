"""
Which reward changes can a behavioural model see?
==================================================

Boltzmann-rational and maximum-causal-entropy policies are blind to
potential shaping and to redistributing reward across next states.  An
optimal policy is blind to much more.  This script runs the invariance
experiments and prints the reports.
"""

import json

import numpy as np

from reward_geometry import BehaviouralModelConfig, random_mdp, random_reward
from reward_geometry.behaviour import boltzmann_policy, mce_policy
from reward_geometry.lab import experiment_invariance, f_class_membership, find_mce_outside_f_witness
from reward_geometry.transforms import apply_potential_shaping, random_redistribution

mdp = random_mdp(4, 3, 0.9, 0.0, seed=11)
r = random_reward(mdp, 1.0, seed=3)
rng = np.random.default_rng(0)

###############################################################################
# One hand-made example: shape, then redistribute, then compare policies.
changed = apply_potential_shaping(r, rng.normal(size=4), mdp.gamma) + random_redistribution(mdp, 2.0, rng)
print("reward moved by", np.abs(changed - r).max())
print("Boltzmann policy moved by", np.abs(boltzmann_policy(mdp, r, 1.0) - boltzmann_policy(mdp, changed, 1.0)).max())
print("MCE policy moved by", np.abs(mce_policy(mdp, r, 0.5) - mce_policy(mdp, changed, 0.5)).max())

###############################################################################
# The same check as a seeded experiment, for each model.
for model in (
    BehaviouralModelConfig("boltzmann", beta=1.0),
    BehaviouralModelConfig("mce", alpha=0.5),
    BehaviouralModelConfig("optimal"),
):
    report = experiment_invariance(model, mdp, trials=20, seed=7)
    print(model.kind.value, "verdict:", "pass" if report.verdict else "fail", json.dumps(report.metrics))

# For the optimal model the maximum STARC distance is large: transformations
# that keep every optimal action can still change the reward's ordering of
# policies a great deal.

###############################################################################
# Boltzmann policies always put the most mass on optimal actions.  MCE
# policies need not, and a small search finds an instance where they do not.
print("Boltzmann policy ranks optimal actions first:", f_class_membership(mdp, boltzmann_policy(mdp, r, 1.0), r))
witness = find_mce_outside_f_witness(seed=0)
if witness is not None:
    pi = mce_policy(witness.mdp, witness.reward, witness.alpha)
    print(f"MCE counterexample: mdp seed {witness.mdp_seed}, alpha {witness.alpha}")
    print("MCE policy:\n", np.round(pi, 4))
