"""
Wrong temperatures and tiny perturbations
=========================================

A wrong rationality temperature only rescales the inferred reward, which
leaves the policy ordering intact.  In the other direction, two rewards at
maximal STARC distance can produce nearly identical Boltzmann policies when
both are small.
"""

import numpy as np

from reward_geometry import random_mdp, random_reward
from reward_geometry.behaviour import boltzmann_policy
from reward_geometry.lab import experiment_param_misspec, experiment_perturbation

mdp = random_mdp(4, 3, 0.9, 0.0, seed=31)
r = random_reward(mdp, 1.0, seed=0)

###############################################################################
# Scaling the reward by c is the same as scaling the inverse temperature by c.
c, beta = 3.0, 0.7
print("b(cR, beta) vs b(R, c*beta):", np.abs(boltzmann_policy(mdp, c * r, beta) - boltzmann_policy(mdp, r, c * beta)).max())

for kind in ("boltzmann", "mce"):
    report = experiment_param_misspec(kind, mdp, trials=10, seed=9)
    print(kind, {k: f"{v:.2e}" for k, v in report.metrics.items()})

###############################################################################
# Opposite rewards cR and -cR: the STARC distance is 1 for every c > 0 while
# the policy gap vanishes as c shrinks.
report = experiment_perturbation(random_mdp(3, 2, 0.9, 0.0, 0), delta_grid=[1e-2, 1e-4], seed=10)
for row in report.trial_metrics:
    print(f"c = {row['c']:.0e}  policy gap = {row['policy_gap']:.3e}  STARC = {row['starc']:.12f}")
