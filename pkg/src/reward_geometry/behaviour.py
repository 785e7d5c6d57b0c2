"""Behavioural models mapping a reward to a policy.

Three models are provided: Boltzmann-rational (softmax of the optimal
advantage), maximal causal entropy (softmax of the soft Q-function) and the
maximally supportive optimal set-valued policy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .mdp import Mdp, SetPolicy, check_policy
from .solvers import DEFAULT_MAX_ITER, DEFAULT_TOL, soft_value_iteration, value_iteration


class ModelKind(str, enum.Enum):
    BOLTZMANN = "boltzmann"
    MCE = "mce"
    OPTIMAL = "optimal"


@dataclass(frozen=True)
class BehaviouralModelConfig:
    """Model choice plus its single temperature-like parameter.

    ``beta`` is the Boltzmann inverse temperature and ``alpha`` the entropy
    weight of the MCE model.  Exactly the parameter the model needs must be set.
    """

    kind: ModelKind
    beta: float | None = None
    alpha: float | None = None

    def __post_init__(self) -> None:
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        wants_beta = kind is ModelKind.BOLTZMANN
        wants_alpha = kind is ModelKind.MCE
        if (self.beta is not None) != wants_beta:
            raise ValueError(f"beta must be given exactly when the model is boltzmann (kind={kind.value})")
        if (self.alpha is not None) != wants_alpha:
            raise ValueError(f"alpha must be given exactly when the model is mce (kind={kind.value})")
        for name in ("beta", "alpha"):
            value = getattr(self, name)
            if value is not None and not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")


def boltzmann_policy(
    mdp: Mdp, r: np.ndarray, beta: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> np.ndarray:
    """Softmax of ``beta * A*``.  Using the advantage keeps exponents non-positive.

    Very large ``beta`` (around 1e4 and up) can saturate to a one-hot policy
    in double precision.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    return softmax(beta * value_iteration(mdp, r, tol, max_iter).a_star, axis=1)


def mce_policy(
    mdp: Mdp, r: np.ndarray, alpha: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> np.ndarray:
    """The maximal causal entropy policy, ``softmax(Q_soft / alpha)``."""
    q_soft = soft_value_iteration(mdp, r, alpha, tol, max_iter).q_soft
    return softmax(q_soft / alpha, axis=1)


def max_supportive_optimal(
    mdp: Mdp, r: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> SetPolicy:
    """Every optimal action in every state."""
    return value_iteration(mdp, r, tol, max_iter).optimal_actions


def set_policy_to_policy(allowed: SetPolicy, n_actions: int) -> np.ndarray:
    """Uniform stochastic policy over the allowed actions of each state."""
    pi = np.zeros((len(allowed), n_actions))
    for s, actions in enumerate(allowed):
        if not actions:
            raise ValueError(f"state {s} has an empty action set")
        pi[s, list(actions)] = 1.0 / len(actions)
    return pi


def model_policy(
    mdp: Mdp,
    r: np.ndarray,
    model: BehaviouralModelConfig,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray | SetPolicy:
    if model.kind is ModelKind.BOLTZMANN:
        return boltzmann_policy(mdp, r, model.beta, tol, max_iter)
    if model.kind is ModelKind.MCE:
        return mce_policy(mdp, r, model.alpha, tol, max_iter)
    return max_supportive_optimal(mdp, r, tol, max_iter)


def rollout(mdp: Mdp, pi: np.ndarray, horizon: int, seed: int) -> list[tuple[int, int, int]]:
    """Sample ``horizon`` transitions from the start distribution under ``pi``."""
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    pi = check_policy(mdp, pi)
    rng = np.random.default_rng(seed)
    state = int(rng.choice(mdp.n_states, p=mdp.initial))
    steps = []
    for _ in range(horizon):
        action = int(rng.choice(mdp.n_actions, p=pi[state]))
        nxt = int(rng.choice(mdp.n_states, p=mdp.transition[state, action]))
        steps.append((state, action, nxt))
        state = nxt
    return steps


def discounted_return(r: np.ndarray, trajectory: list[tuple[int, int, int]], gamma: float) -> float:
    total, discount = 0.0, 1.0
    for s, a, s_next in trajectory:
        total += discount * r[s, a, s_next]
        discount *= gamma
    return total


def _sample_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs``."""
    cumulative = np.cumsum(probs, axis=1)
    draws = rng.random((probs.shape[0], 1)) * cumulative[:, -1:]
    return np.minimum((draws >= cumulative).sum(axis=1), probs.shape[1] - 1)


def sampled_returns(
    mdp: Mdp, r: np.ndarray, pi: np.ndarray, n_rollouts: int, horizon: int, seed: int
) -> np.ndarray:
    """Discounted returns of ``n_rollouts`` independent truncated rollouts, simulated in lockstep."""
    pi = check_policy(mdp, pi)
    rng = np.random.default_rng(seed)
    states = _sample_rows(rng, np.broadcast_to(mdp.initial, (n_rollouts, mdp.n_states)))
    totals = np.zeros(n_rollouts)
    discount = 1.0
    for _ in range(horizon):
        actions = _sample_rows(rng, pi[states])
        nxt = _sample_rows(rng, mdp.transition[states, actions])
        totals += discount * r[states, actions, nxt]
        discount *= mdp.gamma
        states = nxt
    return totals
