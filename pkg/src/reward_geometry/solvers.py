"""Exact tabular solvers for state values and occupancy measures.

Policy evaluation and occupancy measures use direct linear solves.  The
optimal-value solver runs value iteration to the requested residual and then
polishes the result with exact policy-iteration steps, so downstream
comparisons see values accurate to solve precision rather than to ``tol``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .mdp import Mdp, SetPolicy, check_policy, check_reward

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10**6
DEFAULT_CAP = 4096


class ConvergenceError(RuntimeError):
    """A fixed-point solver did not reach its tolerance within ``max_iter`` sweeps."""


class CapExceededError(ValueError):
    """Brute-force enumeration would exceed the configured number of policies."""


@dataclass(frozen=True)
class OptimalValues:
    v_star: np.ndarray
    q_star: np.ndarray
    a_star: np.ndarray
    optimal_actions: SetPolicy
    tie_tol: float


@dataclass(frozen=True)
class PolicyValues:
    v_pi: np.ndarray
    q_pi: np.ndarray
    a_pi: np.ndarray


@dataclass(frozen=True)
class SoftQ:
    q_soft: np.ndarray
    alpha: float


def expected_reward(mdp: Mdp, r: np.ndarray) -> np.ndarray:
    """One-step expected reward ``E_{s'~tau(s,a)}[R(s,a,s')]`` as an ``(S, A)`` array."""
    return np.einsum("sat,sat->sa", mdp.transition, r)


def tie_tolerance(q_star: np.ndarray) -> float:
    return 1e-8 * (1.0 + float(np.max(np.abs(q_star))))


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """Deterministic policy choosing the lowest-index maximiser of ``q`` in each state."""
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return pi


def _state_matrix(mdp: Mdp, pi: np.ndarray) -> np.ndarray:
    return np.einsum("sa,sat->st", pi, mdp.transition)


def _evaluate(mdp: Mdp, r_bar: np.ndarray, pi: np.ndarray) -> np.ndarray:
    system = np.eye(mdp.n_states) - mdp.gamma * _state_matrix(mdp, pi)
    return np.linalg.solve(system, (pi * r_bar).sum(axis=1))


def value_iteration(
    mdp: Mdp, r: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> OptimalValues:
    """Optimal values for ``r``.

    Iterates the Bellman optimality backup until the sup-norm residual drops
    to ``tol * (1 - gamma)``, then replaces the iterate by the exact value of
    its greedy policy while that policy keeps improving.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    r = check_reward(mdp, r)
    r_bar = expected_reward(mdp, r)
    gamma = mdp.gamma
    v = np.zeros(mdp.n_states)
    threshold = tol * (1.0 - gamma)
    for _ in range(max_iter):
        v_next = (r_bar + gamma * mdp.transition @ v).max(axis=1)
        residual = np.max(np.abs(v_next - v))
        v = v_next
        if residual <= threshold:
            break
    else:
        raise ConvergenceError(f"value iteration did not reach residual {threshold:.3g} in {max_iter} sweeps")

    states = np.arange(mdp.n_states)
    actions = np.argmax(r_bar + gamma * mdp.transition @ v, axis=1)
    for _ in range(mdp.n_states * mdp.n_actions + 1):
        v = _evaluate(mdp, r_bar, np.eye(mdp.n_actions)[actions])
        q = r_bar + gamma * mdp.transition @ v
        current = q[states, actions]
        better = q.max(axis=1) > current + 1e-13 * (1.0 + np.abs(current))
        if not better.any():
            break
        actions = np.where(better, np.argmax(q, axis=1), actions)

    q_star = r_bar + gamma * mdp.transition @ v
    v_star = q_star.max(axis=1)
    a_star = q_star - v_star[:, None]
    tie_tol = tie_tolerance(q_star)
    optimal = tuple(tuple(int(a) for a in np.flatnonzero(row >= -tie_tol)) for row in a_star)
    return OptimalValues(v_star, q_star, a_star, optimal, tie_tol)


def policy_evaluation(mdp: Mdp, r: np.ndarray, pi: np.ndarray) -> PolicyValues:
    """Solve ``(I - gamma P_pi) v = r_pi`` directly."""
    r = check_reward(mdp, r)
    pi = check_policy(mdp, pi)
    r_bar = expected_reward(mdp, r)
    v = _evaluate(mdp, r_bar, pi)
    q = r_bar + mdp.gamma * mdp.transition @ v
    return PolicyValues(v, q, q - v[:, None])


def soft_backup(mdp: Mdp, r_bar: np.ndarray, q: np.ndarray, alpha: float) -> np.ndarray:
    soft_v = alpha * logsumexp(q / alpha, axis=1)
    return r_bar + mdp.gamma * mdp.transition @ soft_v


def soft_value_iteration(
    mdp: Mdp,
    r: np.ndarray,
    alpha: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SoftQ:
    """Fixed point of the soft Bellman backup with temperature ``alpha``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    r = check_reward(mdp, r)
    r_bar = expected_reward(mdp, r)
    q = r_bar.copy()
    for _ in range(max_iter):
        q_next = soft_backup(mdp, r_bar, q, alpha)
        residual = np.max(np.abs(q_next - q))
        q = q_next
        if residual <= tol:
            return SoftQ(q, float(alpha))
    raise ConvergenceError(f"soft value iteration did not reach residual {tol:.3g} in {max_iter} sweeps")


def state_visitation(mdp: Mdp, pi: np.ndarray) -> np.ndarray:
    """Discounted state visitation ``w = mu0 + gamma P_pi^T w``."""
    pi = check_policy(mdp, pi)
    system = np.eye(mdp.n_states) - mdp.gamma * _state_matrix(mdp, pi).T
    return np.linalg.solve(system, mdp.initial)


def occupancy_measure(mdp: Mdp, pi: np.ndarray) -> np.ndarray:
    """Discounted transition visitation ``eta(s,a,s') = w(s) pi(a|s) tau(s'|s,a)``."""
    w = state_visitation(mdp, pi)
    return (w[:, None] * pi)[:, :, None] * mdp.transition


def policy_return(mdp: Mdp, r: np.ndarray, pi: np.ndarray) -> float:
    return float(mdp.initial @ policy_evaluation(mdp, r, pi).v_pi)


def j_range(mdp: Mdp, r: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """``(max_pi J, min_pi J)``, attained by greedy policies for ``r`` and ``-r``."""
    r = check_reward(mdp, r)
    best = greedy_policy(value_iteration(mdp, r, tol).q_star)
    worst = greedy_policy(value_iteration(mdp, -r, tol).q_star)
    j_max = policy_return(mdp, r, best)
    j_min = policy_return(mdp, r, worst)
    return j_max, min(j_min, j_max)


def _check_cap(mdp: Mdp, cap: int) -> int:
    count = mdp.n_actions**mdp.n_states
    if count > cap:
        raise CapExceededError(f"{mdp.n_actions}^{mdp.n_states} = {count} deterministic policies exceeds cap {cap}")
    return count


def deterministic_action_table(mdp: Mdp, cap: int = DEFAULT_CAP) -> np.ndarray:
    """``(A^S, S)`` array of chosen actions, lexicographic with state 0 most significant."""
    _check_cap(mdp, cap)
    table = list(itertools.product(range(mdp.n_actions), repeat=mdp.n_states))
    return np.asarray(table, dtype=np.int64).reshape(-1, mdp.n_states)


def enumerate_deterministic_policies(mdp: Mdp, cap: int = DEFAULT_CAP) -> list[np.ndarray]:
    eye = np.eye(mdp.n_actions)
    return [eye[row] for row in deterministic_action_table(mdp, cap)]


def deterministic_values(mdp: Mdp, r: np.ndarray, cap: int = DEFAULT_CAP) -> np.ndarray:
    """``(A^S, S)`` array of exact state values, one row per deterministic policy."""
    r = check_reward(mdp, r)
    table = deterministic_action_table(mdp, cap)
    states = np.arange(mdp.n_states)
    r_bar = expected_reward(mdp, r)
    transitions = mdp.transition[states, table]  # (P, S, S)
    rewards = r_bar[states, table]  # (P, S)
    systems = np.eye(mdp.n_states) - mdp.gamma * transitions
    return np.linalg.solve(systems, rewards[..., None])[..., 0]


def deterministic_returns(mdp: Mdp, r: np.ndarray, cap: int = DEFAULT_CAP) -> np.ndarray:
    return deterministic_values(mdp, r, cap) @ mdp.initial


class OrderVerdict(enum.Enum):
    SAME_ORDER = "same_order"
    DIFFERENT_ORDER = "different_order"


def policy_order_oracle(
    mdp: Mdp, r1: np.ndarray, r2: np.ndarray, cap: int = DEFAULT_CAP, tol: float = 1e-8
) -> OrderVerdict:
    """Decide whether ``r1`` and ``r2`` order all policies identically.

    Returns are affine in the occupancy measure, whose polytope has the
    deterministic policies as vertices, so an affine relation
    ``J1 = a*J2 + b`` with ``a > 0`` on those vertices holds for every
    policy.  The fitted residual is compared against
    ``tol * (1 + spread of J1)``.
    """
    j1 = deterministic_returns(mdp, r1, cap)
    j2 = deterministic_returns(mdp, r2, cap)
    spread1 = float(np.ptp(j1))
    spread2 = float(np.ptp(j2))
    slack1 = tol * (1.0 + spread1)
    slack2 = tol * (1.0 + spread2)
    const1, const2 = spread1 <= slack1, spread2 <= slack2
    if const1 and const2:
        return OrderVerdict.SAME_ORDER
    if const1 or const2:
        return OrderVerdict.DIFFERENT_ORDER
    design = np.column_stack([j2, np.ones_like(j2)])
    (slope, offset), *_ = np.linalg.lstsq(design, j1, rcond=None)
    residual = np.max(np.abs(j1 - (slope * j2 + offset)))
    if slope > 0 and residual <= slack1:
        return OrderVerdict.SAME_ORDER
    return OrderVerdict.DIFFERENT_ORDER
