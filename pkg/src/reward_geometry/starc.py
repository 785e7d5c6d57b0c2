"""STARC pseudometrics on reward functions.

Each reward is first mapped to a unit-norm canonical form.  The default
configuration projects onto the orthogonal complement of the
shaping-plus-redistribution subspace and reports half the Euclidean distance
between the normalised projections, which lands in ``[0, 1]``.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Any

import numpy as np

from .mdp import Mdp, check_policy, check_reward, reward_flat
from .solvers import (
    DEFAULT_CAP,
    DEFAULT_TOL,
    deterministic_returns,
    expected_reward,
    greedy_policy,
    j_range,
    occupancy_measure,
    policy_evaluation,
    policy_return,
    value_iteration,
)

TRIVIAL_REL_TOL = 1e-12


class CanonKind(str, enum.Enum):
    MINIMAL_L2 = "minimal_l2"
    VAL = "val"
    OCCUPANCY = "occupancy"


class NormKind(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"
    WEIGHTED_L2 = "weighted_l2"
    JRANGE = "jrange"


class MetricKind(str, enum.Enum):
    SCALED_L2 = "scaled_l2"
    ANGLE = "angle"


def _kind_and_params(value: Any, what: str) -> tuple[str, dict[str, Any]]:
    if isinstance(value, str):
        return value, {}
    if isinstance(value, dict) and "kind" in value:
        params = {k: v for k, v in value.items() if k != "kind"}
        return value["kind"], params
    raise ValueError(f"{what} must be a string or an object with a 'kind' field")


@dataclass(frozen=True, eq=False)
class StarcConfig:
    """Configuration of a STARC distance.

    ``policy`` is used by the VAL canonicaliser (uniform when omitted),
    ``weights`` by the weighted L2 norm and ``factor`` by the scaled L2 metric.
    """

    canon: CanonKind = CanonKind.MINIMAL_L2
    norm: NormKind = NormKind.L2
    metric: MetricKind = MetricKind.SCALED_L2
    factor: float = 0.5
    policy: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "canon", CanonKind(self.canon))
        object.__setattr__(self, "norm", NormKind(self.norm))
        object.__setattr__(self, "metric", MetricKind(self.metric))
        if not (np.isfinite(self.factor) and self.factor > 0):
            raise ValueError(f"metric factor must be positive, got {self.factor!r}")
        if self.norm is NormKind.WEIGHTED_L2:
            if self.weights is None:
                raise ValueError("weighted_l2 norm needs weights")
            weights = np.asarray(self.weights, dtype=np.float64)
            if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
                raise ValueError("weights must be strictly positive and finite")
            object.__setattr__(self, "weights", weights)
        if self.policy is not None:
            object.__setattr__(self, "policy", np.asarray(self.policy, dtype=np.float64))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StarcConfig":
        if not isinstance(data, dict):
            raise ValueError("STARC config must be an object")
        unknown = set(data) - {"canon", "norm", "metric"}
        if unknown:
            raise ValueError(f"unknown STARC config fields {sorted(unknown)}")
        canon, canon_params = _kind_and_params(data.get("canon", "minimal_l2"), "canon")
        norm, norm_params = _kind_and_params(data.get("norm", "l2"), "norm")
        metric, metric_params = _kind_and_params(data.get("metric", "scaled_l2"), "metric")
        for params, allowed in ((canon_params, {"policy"}), (norm_params, {"weights"}), (metric_params, {"factor"})):
            if set(params) - allowed:
                raise ValueError(f"unexpected parameters {sorted(set(params) - allowed)}")
        try:
            return cls(
                canon,
                norm,
                metric,
                factor=float(metric_params.get("factor", 0.5)),
                policy=canon_params.get("policy"),
                weights=norm_params.get("weights"),
            )
        except (TypeError, ValueError) as exc:
            raise ValueError(f"invalid STARC config: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        canon: Any = self.canon.value
        if self.policy is not None:
            canon = {"kind": canon, "policy": self.policy.tolist()}
        norm: Any = self.norm.value
        if self.weights is not None:
            norm = {"kind": norm, "weights": self.weights.tolist()}
        metric: Any = self.metric.value
        if self.metric is MetricKind.SCALED_L2:
            metric = {"kind": metric, "factor": self.factor}
        return {"canon": canon, "norm": norm, "metric": metric}


DEFAULT_CONFIG = StarcConfig()


# ---------------------------------------------------------------------------
# Canonicalisation


@functools.lru_cache(maxsize=64)
def _minimal_l2_factors(mdp: Mdp) -> tuple[np.ndarray, np.ndarray]:
    """Row norms of the dynamics and an orthonormal basis of projected shaping.

    Rewards orthogonal to every redistribution vector are exactly those whose
    ``(s, a)`` block is a multiple of the transition row, so that complement
    has the ``S*A`` orthonormal coordinates ``tau(s,a,.)/||tau(s,a,.)||``.
    The minimal canonical reward is the part of these coordinates orthogonal
    to the coordinates of the shaping vectors.
    """
    n, k = mdp.n_states, mdp.n_actions
    row_norms = np.linalg.norm(mdp.transition, axis=2)
    indicator = np.repeat(np.eye(n)[:, None, :], k, axis=1)  # [s == i]
    shaping = (mdp.gamma * mdp.transition - indicator) / row_norms[:, :, None]
    u, sing, _ = np.linalg.svd(shaping.reshape(n * k, n), full_matrices=False)
    basis = u[:, sing > 1e-12 * sing[0]]
    row_norms.setflags(write=False)
    basis.setflags(write=False)
    return row_norms, basis


def canon_minimal_l2(r: np.ndarray, mdp: Mdp) -> np.ndarray:
    """Orthogonal projection onto the complement of shaping plus redistribution."""
    r = check_reward(mdp, r)
    row_norms, basis = _minimal_l2_factors(mdp)
    coords = (expected_reward(mdp, r) / row_norms).reshape(-1)
    coords = coords - basis @ (basis.T @ coords)
    scale = coords.reshape(row_norms.shape) / row_norms
    return scale[:, :, None] * mdp.transition


def canon_val(r: np.ndarray, mdp: Mdp, pi: np.ndarray | None = None) -> np.ndarray:
    """``E_{s'}[R(s,a,s') - V(s) + gamma V(s')]`` with ``V`` the value of ``pi`` under ``r``.

    The output is constant in ``s'``.  ``pi`` defaults to the uniform policy.
    """
    r = check_reward(mdp, r)
    if pi is None:
        pi = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    pi = check_policy(mdp, pi)
    v = policy_evaluation(mdp, r, pi).v_pi
    level = expected_reward(mdp, r) - v[:, None] + mdp.gamma * mdp.transition @ v
    return np.broadcast_to(level[:, :, None], mdp.reward_shape).copy()


@functools.lru_cache(maxsize=64)
def _occupancy_direction_basis(mdp: Mdp) -> np.ndarray:
    """Orthonormal basis (columns) of the span of differences of occupancy measures.

    The span is estimated from random full-support policies; its dimension is
    ``S*(A-1)``, which is checked against the singular-value gap.
    """
    n, k = mdp.n_states, mdp.n_actions
    dim = n * (k - 1)
    if dim == 0:
        return np.zeros((n * k * n, 0))
    rng = np.random.default_rng(0)
    policies = rng.dirichlet(np.ones(k), size=(2 * dim + 2, n))
    etas = np.array([reward_flat(occupancy_measure(mdp, pi)) for pi in policies])
    u, sing, _ = np.linalg.svd((etas[1:] - etas[0]).T, full_matrices=False)
    cutoff = 1e-9 * sing[0]
    if sing[dim - 1] <= cutoff or (len(sing) > dim and sing[dim] > cutoff):
        raise np.linalg.LinAlgError("occupancy differences do not have the expected rank")
    basis = u[:, :dim]
    basis.setflags(write=False)
    return basis


def canon_occupancy(r: np.ndarray, mdp: Mdp) -> np.ndarray:
    """Projection onto the linear span of differences of occupancy measures.

    Returns then satisfy ``J_r(pi) = J_c(pi) + k`` for a constant ``k``.
    """
    basis = _occupancy_direction_basis(mdp)
    flat = reward_flat(check_reward(mdp, r))
    return (basis @ (basis.T @ flat)).reshape(mdp.reward_shape)


def canonicalise(r: np.ndarray, mdp: Mdp, cfg: StarcConfig = DEFAULT_CONFIG) -> np.ndarray:
    if cfg.canon is CanonKind.MINIMAL_L2:
        return canon_minimal_l2(r, mdp)
    if cfg.canon is CanonKind.VAL:
        return canon_val(r, mdp, cfg.policy)
    return canon_occupancy(r, mdp)


# ---------------------------------------------------------------------------
# Norms, standardisation, distance


def reward_norm(
    r: np.ndarray, mdp: Mdp, norm: NormKind | str = NormKind.L2, weights: np.ndarray | None = None
) -> float:
    norm = NormKind(norm)
    r = check_reward(mdp, r)
    flat = reward_flat(r)
    if norm is NormKind.L1:
        return float(np.sum(np.abs(flat)))
    if norm is NormKind.L2:
        return float(np.linalg.norm(flat))
    if norm is NormKind.LINF:
        return float(np.max(np.abs(flat)))
    if norm is NormKind.WEIGHTED_L2:
        if weights is None:
            raise ValueError("weighted_l2 norm needs weights")
        w = np.broadcast_to(np.asarray(weights, dtype=np.float64).reshape(-1), flat.shape)
        return float(np.sqrt(np.sum(w * flat**2)))
    j_max, j_min = j_range(mdp, r)
    return j_max - j_min


@dataclass(frozen=True)
class CanonicalReward:
    values: np.ndarray
    was_trivial: bool


def standardise(r: np.ndarray, mdp: Mdp, cfg: StarcConfig = DEFAULT_CONFIG) -> CanonicalReward:
    """Canonicalise and scale to unit norm; near-zero canonical rewards map to zero."""
    r = check_reward(mdp, r)
    canonical = canonicalise(r, mdp, cfg)
    size = reward_norm(canonical, mdp, cfg.norm, cfg.weights)
    if size <= TRIVIAL_REL_TOL * (1.0 + float(np.linalg.norm(r))):
        return CanonicalReward(np.zeros(mdp.reward_shape), True)
    return CanonicalReward(canonical / size, False)


def _metric(x: CanonicalReward, y: CanonicalReward, cfg: StarcConfig) -> float:
    if cfg.metric is MetricKind.SCALED_L2:
        return cfg.factor * float(np.linalg.norm(reward_flat(x.values - y.values)))
    if x.was_trivial and y.was_trivial:
        return 0.0
    if x.was_trivial or y.was_trivial:
        return float(np.pi / 2)
    u, v = reward_flat(x.values), reward_flat(y.values)
    # Unlike arccos of the cosine, this form stays accurate near 0 and near pi.
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    return float(2.0 * np.arctan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def starc_distance(r1: np.ndarray, r2: np.ndarray, mdp: Mdp, cfg: StarcConfig = DEFAULT_CONFIG) -> float:
    return _metric(standardise(r1, mdp, cfg), standardise(r2, mdp, cfg), cfg)


# ---------------------------------------------------------------------------
# Regret checks


def regret_of_optimizing(mdp: Mdp, r_true: np.ndarray, r_proxy: np.ndarray, tol: float = DEFAULT_TOL) -> float:
    """Normalised true-reward regret of a greedy policy for ``r_proxy``."""
    j_max, j_min = j_range(mdp, r_true, tol)
    spread = j_max - j_min
    if spread <= TRIVIAL_REL_TOL * (1.0 + abs(j_max)):
        return 0.0
    best = greedy_policy(value_iteration(mdp, r_true, tol).q_star)
    proxy = greedy_policy(value_iteration(mdp, r_proxy, tol).q_star)
    return (policy_return(mdp, r_true, best) - policy_return(mdp, r_true, proxy)) / spread


def worst_case_regret_lb(mdp: Mdp, r1: np.ndarray, r2: np.ndarray, cap: int = DEFAULT_CAP) -> float:
    """Largest normalised ``r1``-loss of a move that ``r2`` does not consider worse.

    Only deterministic pairs are enumerated, so this is a lower bound on the
    same quantity over stochastic policies.
    """
    j1 = deterministic_returns(mdp, r1, cap)
    j2 = deterministic_returns(mdp, r2, cap)
    spread = float(np.ptp(j1))
    if spread <= TRIVIAL_REL_TOL * (1.0 + float(np.max(np.abs(j1)))):
        return 0.0
    allowed = j2[None, :] >= j2[:, None]  # [i, j]: moving from policy i to policy j
    loss = np.where(allowed, j1[:, None] - j1[None, :], -np.inf)
    return max(0.0, float(loss.max()) / spread)


def nas_radius(epsilon: float) -> float:
    """``sin(2 arcsin(epsilon))``: relative perturbation size that keeps the distance below ``epsilon``."""
    if not 0 <= epsilon < 0.5:
        raise ValueError(f"epsilon must lie in [0, 0.5), got {epsilon!r}")
    return float(np.sin(2.0 * np.arcsin(epsilon)))


def nas_epsilon_bound_check(r: np.ndarray, mdp: Mdp, t2_perturbation: np.ndarray, epsilon: float) -> bool:
    """Check that a perturbation within the radius keeps the default distance within ``epsilon``.

    Returns ``True`` when the perturbation lies outside the radius (nothing
    to check), otherwise whether ``d(r, r + perturbation) <= epsilon + 1e-9``.
    """
    radius = nas_radius(epsilon) * float(np.linalg.norm(reward_flat(canon_minimal_l2(r, mdp))))
    size = float(np.linalg.norm(reward_flat(check_reward(mdp, t2_perturbation))))
    if size > radius * (1.0 + 1e-12):
        return True
    return starc_distance(r, r + t2_perturbation, mdp) <= epsilon + 1e-9
