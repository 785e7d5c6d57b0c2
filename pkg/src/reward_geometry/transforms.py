"""Reward transformations together with the subspaces they span.

Potential shaping adds ``gamma*phi(s') - phi(s)``.  S'-redistribution adds a
tensor whose expectation under every transition row is zero.  Together they
span the linear subspace of rewards that every policy values identically up
to a constant; the helpers here build explicit bases for both parts and
decompose reward differences against them.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import null_space

from .mdp import Mdp, check_reward, reward_flat
from .solvers import DEFAULT_TOL, expected_reward, value_iteration

RANK_TOL = 1e-9


# ---------------------------------------------------------------------------
# Elementary transformations


def shaping_reward(phi: np.ndarray, gamma: float, n_actions: int) -> np.ndarray:
    """The tensor ``gamma*phi(s') - phi(s)``, identical for every action."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 1 or not np.all(np.isfinite(phi)):
        raise ValueError("potential must be a finite vector")
    term = gamma * phi[None, :] - phi[:, None]
    return np.repeat(term[:, None, :], n_actions, axis=1)


def apply_potential_shaping(r: np.ndarray, phi: np.ndarray, gamma: float) -> np.ndarray:
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")
    r = np.asarray(r, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (r.shape[0],):
        raise ValueError(f"potential length {phi.shape} does not match {r.shape[0]} states")
    return r + shaping_reward(phi, gamma, r.shape[1])


def apply_linear_scaling(r: np.ndarray, c: float) -> np.ndarray:
    if not c > 0:
        raise ValueError(f"scaling factor must be positive, got {c!r}")
    return np.asarray(r, dtype=np.float64) * c


def apply_constant_shift(r: np.ndarray, c: float) -> np.ndarray:
    return np.asarray(r, dtype=np.float64) + c


@functools.lru_cache(maxsize=64)
def _row_null_spaces(mdp: Mdp) -> np.ndarray:
    """``(S, A, S, S-1)`` orthonormal bases of the null space of each transition row."""
    n, k = mdp.n_states, mdp.n_actions
    out = np.empty((n, k, n, n - 1))
    for s in range(n):
        for a in range(k):
            out[s, a] = null_space(mdp.transition[s, a][None, :])
    out.setflags(write=False)
    return out


def random_redistribution(mdp: Mdp, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    """Random tensor with zero expectation under every transition row and sup-norm ``magnitude``."""
    if magnitude < 0:
        raise ValueError(f"magnitude must be non-negative, got {magnitude!r}")
    if magnitude == 0 or mdp.n_states == 1:
        return np.zeros(mdp.reward_shape)
    bases = _row_null_spaces(mdp)
    coeffs = rng.standard_normal(bases.shape[:2] + (bases.shape[3],))
    z = np.einsum("satk,sak->sat", bases, coeffs)
    peak = np.max(np.abs(z))
    return z * (magnitude / peak) if peak > 0 else z


def apply_sprime_redistribution(r: np.ndarray, mdp: Mdp, magnitude: float, seed: int) -> np.ndarray:
    r = check_reward(mdp, r)
    return r + random_redistribution(mdp, magnitude, np.random.default_rng(seed))


def apply_optimality_preserving(
    r: np.ndarray,
    mdp: Mdp,
    psi: np.ndarray,
    seed: int,
    slack: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Reward whose optimal value is ``psi`` and whose optimal actions match those of ``r``.

    The result is ``target(s,a) - gamma*psi(s')`` where ``target`` equals
    ``psi(s)`` on optimal actions of ``r`` and ``psi(s) - slack(s,a)`` elsewhere.
    With ``slack=None`` the slack is drawn uniformly from ``(0.1, 1]`` and
    scaled by ``1 + max|psi|``.  An explicit ``slack`` must be positive on
    every non-optimal action; its values on optimal actions are ignored.
    """
    r = check_reward(mdp, r)
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape != (mdp.n_states,) or not np.all(np.isfinite(psi)):
        raise ValueError("psi must be a finite vector with one entry per state")
    optimal = np.zeros((mdp.n_states, mdp.n_actions), dtype=bool)
    for s, actions in enumerate(value_iteration(mdp, r, tol).optimal_actions):
        optimal[s, list(actions)] = True
    if slack is None:
        rng = np.random.default_rng(seed)
        slack = (1.0 - 0.9 * rng.random(optimal.shape)) * (1.0 + np.max(np.abs(psi)))
    else:
        slack = np.asarray(slack, dtype=np.float64)
        if slack.shape != optimal.shape or np.any(slack[~optimal] <= 0):
            raise ValueError("slack must be an (S, A) array, positive on non-optimal actions")
    target = psi[:, None] - np.where(optimal, 0.0, slack)
    return np.broadcast_to(target[:, :, None] - mdp.gamma * psi[None, None, :], mdp.reward_shape).copy()


# ---------------------------------------------------------------------------
# Subspace bases


class SubspaceKind(str, enum.Enum):
    SHAPING = "shaping"
    REDISTRIBUTION = "redistribution"
    COMBINED = "combined"


@dataclass(frozen=True)
class SubspaceBasis:
    """Basis vectors (rows, flat reward layout) of a linear subspace of rewards."""

    vectors: np.ndarray
    kind: SubspaceKind

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def rank(self) -> int:
        if len(self) == 0:
            return 0
        return int(np.linalg.matrix_rank(self.vectors, tol=RANK_TOL))


def shaping_basis(mdp: Mdp) -> SubspaceBasis:
    """One shaping tensor per indicator potential."""
    eye = np.eye(mdp.n_states)
    rows = [reward_flat(shaping_reward(eye[i], mdp.gamma, mdp.n_actions)) for i in range(mdp.n_states)]
    return SubspaceBasis(np.asarray(rows), SubspaceKind.SHAPING)


def redistribution_basis(mdp: Mdp) -> SubspaceBasis:
    """Null-space vectors of each transition row, embedded in their ``(s, a)`` block."""
    n, k = mdp.n_states, mdp.n_actions
    dim = n * k * n
    rows = np.zeros((n * k * (n - 1), dim))
    if n > 1:
        bases = _row_null_spaces(mdp)
        i = 0
        for s in range(n):
            for a in range(k):
                start = (s * k + a) * n
                rows[i : i + n - 1, start : start + n] = bases[s, a].T
                i += n - 1
    return SubspaceBasis(rows, SubspaceKind.REDISTRIBUTION)


def combined_basis(mdp: Mdp) -> SubspaceBasis:
    return SubspaceBasis(
        np.vstack([shaping_basis(mdp).vectors, redistribution_basis(mdp).vectors]),
        SubspaceKind.COMBINED,
    )


@dataclass(frozen=True)
class Decomposition:
    """Least-squares fit of a reward difference by shaping and redistribution vectors.

    ``coefficients`` index the rows of :func:`combined_basis`: first the
    ``S`` shaping vectors, then the redistribution vectors.
    """

    in_ps_sr: bool
    residual_norm: float
    coefficients: np.ndarray

    def reconstruct(self, mdp: Mdp) -> np.ndarray:
        flat = self.coefficients @ combined_basis(mdp).vectors
        return flat.reshape(mdp.reward_shape)


def decompose_difference(r1: np.ndarray, r2: np.ndarray, mdp: Mdp) -> Decomposition:
    """Project ``r2 - r1`` onto shaping plus redistribution and report the residual.

    Membership holds when the residual sup-norm is at most
    ``1e-8 * (1 + ||r2 - r1||)``.
    """
    diff = reward_flat(check_reward(mdp, r2) - check_reward(mdp, r1))
    basis = combined_basis(mdp).vectors
    coeffs, *_ = np.linalg.lstsq(basis.T, diff, rcond=None)
    residual = diff - basis.T @ coeffs
    sup = float(np.max(np.abs(residual)))
    inside = sup <= 1e-8 * (1.0 + float(np.linalg.norm(diff)))
    return Decomposition(inside, sup, coeffs)


@dataclass(frozen=True)
class ScaledDecomposition:
    """``r2 = scale * r1 + (shaping + redistribution) + residual``."""

    scale: float
    coefficients: np.ndarray
    residual_norm: float


def decompose_scaled_difference(r1: np.ndarray, r2: np.ndarray, mdp: Mdp) -> ScaledDecomposition:
    """Jointly fit a scale of ``r1`` and a shaping-plus-redistribution term to ``r2``."""
    basis = combined_basis(mdp).vectors
    target = reward_flat(check_reward(mdp, r2))
    design = np.column_stack([reward_flat(check_reward(mdp, r1)), basis.T])
    solution, *_ = np.linalg.lstsq(design, target, rcond=None)
    residual = target - design @ solution
    return ScaledDecomposition(float(solution[0]), solution[1:], float(np.max(np.abs(residual))))


def same_optimal_policies(mdp: Mdp, r1: np.ndarray, r2: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    return value_iteration(mdp, r1, tol).optimal_actions == value_iteration(mdp, r2, tol).optimal_actions


# ---------------------------------------------------------------------------
# Constructions that separate environments


def transfer_construction_tau(
    r1: np.ndarray, tau1: np.ndarray, tau2: np.ndarray, target: np.ndarray
) -> np.ndarray:
    """Reward agreeing with ``r1`` in expectation under ``tau1`` but hitting ``target`` under ``tau2``.

    ``target`` is an ``(S, A)`` array; NaN entries leave that row of ``r1``
    untouched.  Each targeted row is the least-norm solution of the two
    linear constraints, which are independent whenever the rows of ``tau1``
    and ``tau2`` differ.
    """
    r1 = np.asarray(r1, dtype=np.float64)
    tau1 = np.asarray(tau1, dtype=np.float64)
    tau2 = np.asarray(tau2, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if not (r1.shape == tau1.shape == tau2.shape) or target.shape != r1.shape[:2]:
        raise ValueError("r1, tau1, tau2 must share shape (S, A, S) and target must be (S, A)")
    out = r1.copy()
    for s, a in zip(*np.nonzero(np.isfinite(target))):
        if np.allclose(tau1[s, a], tau2[s, a], rtol=0.0, atol=1e-12):
            raise ValueError(f"tau1 and tau2 coincide at targeted ({s},{a})")
        system = np.vstack([tau1[s, a], tau2[s, a]])
        rhs = np.array([tau1[s, a] @ r1[s, a], target[s, a]])
        out[s, a], *_ = np.linalg.lstsq(system, rhs, rcond=None)
    return out


def transfer_construction_gamma(gamma1: float, state: int, x: float, mdp: Mdp) -> np.ndarray:
    """Shaping under ``gamma1`` by the potential equal to ``x`` at ``state`` and zero elsewhere.

    The result is trivial when paired with ``gamma1`` but, for a state whose
    visitation depends on the policy, not under other discounts.
    """
    if not (0.0 < gamma1 < 1.0):
        raise ValueError(f"gamma1 must lie in (0, 1), got {gamma1!r}")
    if x == 0:
        raise ValueError("x must be non-zero")
    if not 0 <= state < mdp.n_states:
        raise ValueError(f"state {state} out of range")
    phi = np.zeros(mdp.n_states)
    phi[state] = x
    return shaping_reward(phi, gamma1, mdp.n_actions)


def adversarial_tau_target(r: np.ndarray, tau1: np.ndarray, tau2: np.ndarray) -> np.ndarray:
    """Target ``-E_{tau2}[r]`` on every row where the two dynamics differ, NaN elsewhere."""
    differs = ~np.all(np.isclose(tau1, tau2, rtol=0.0, atol=1e-12), axis=2)
    expected = np.einsum("sat,sat->sa", tau2, r)
    return np.where(differs, -expected, np.nan)


# ---------------------------------------------------------------------------
# Serialisable transformation specs


class TransformKind(str, enum.Enum):
    IDENTITY = "identity"
    POTENTIAL_SHAPING = "potential_shaping"
    SPRIME_REDISTRIBUTION = "sprime_redistribution"
    LINEAR_SCALING = "linear_scaling"
    CONSTANT_SHIFT = "constant_shift"
    OPTIMALITY_PRESERVING = "optimality_preserving"


_REQUIRED = {
    TransformKind.IDENTITY: set(),
    TransformKind.POTENTIAL_SHAPING: {"phi"},
    TransformKind.SPRIME_REDISTRIBUTION: set(),
    TransformKind.LINEAR_SCALING: {"c"},
    TransformKind.CONSTANT_SHIFT: {"c"},
    TransformKind.OPTIMALITY_PRESERVING: {"psi"},
}
_ALLOWED = {
    TransformKind.SPRIME_REDISTRIBUTION: {"magnitude", "z"},
    TransformKind.OPTIMALITY_PRESERVING: {"psi", "slack"},
}


@dataclass(frozen=True)
class TransformSpec:
    """A transformation plus transformations applied after it, in order."""

    kind: TransformKind
    params: dict[str, Any] = field(default_factory=dict)
    then: tuple["TransformSpec", ...] = ()

    def __post_init__(self) -> None:
        kind = TransformKind(self.kind)
        object.__setattr__(self, "kind", kind)
        keys = set(self.params)
        missing = _REQUIRED[kind] - keys
        extra = keys - _ALLOWED.get(kind, _REQUIRED[kind])
        if missing or extra:
            raise ValueError(f"{kind.value}: missing params {sorted(missing)}, unexpected {sorted(extra)}")
        if kind is TransformKind.SPRIME_REDISTRIBUTION and len(keys) != 1:
            raise ValueError("sprime_redistribution takes exactly one of 'magnitude' or 'z'")
        if kind is TransformKind.LINEAR_SCALING and not float(self.params["c"]) > 0:
            raise ValueError(f"linear_scaling factor must be positive, got {self.params['c']!r}")
        object.__setattr__(self, "then", tuple(self.then))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TransformSpec":
        if not isinstance(data, dict) or "kind" not in data:
            raise ValueError("transform spec must be an object with a 'kind' field")
        unknown = set(data) - {"kind", "params", "then"}
        if unknown:
            raise ValueError(f"unknown transform spec fields {sorted(unknown)}")
        then = data.get("then", [])
        if not isinstance(then, list):
            raise ValueError("'then' must be a list")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ValueError("'params' must be an object")
        return cls(data["kind"], dict(params), tuple(cls.from_dict(item) for item in then))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, "params": self.params}
        if self.then:
            out["then"] = [item.to_dict() for item in self.then]
        return out

    def flatten(self) -> list["TransformSpec"]:
        steps = [TransformSpec(self.kind, self.params)]
        for item in self.then:
            steps.extend(item.flatten())
        return steps


def _apply_step(step: TransformSpec, r: np.ndarray, mdp: Mdp, seed: int) -> np.ndarray:
    p = step.params
    if step.kind is TransformKind.IDENTITY:
        return r
    if step.kind is TransformKind.POTENTIAL_SHAPING:
        return apply_potential_shaping(r, np.asarray(p["phi"], dtype=np.float64), mdp.gamma)
    if step.kind is TransformKind.LINEAR_SCALING:
        return apply_linear_scaling(r, float(p["c"]))
    if step.kind is TransformKind.CONSTANT_SHIFT:
        return apply_constant_shift(r, float(p["c"]))
    if step.kind is TransformKind.SPRIME_REDISTRIBUTION:
        if "magnitude" in p:
            return apply_sprime_redistribution(r, mdp, float(p["magnitude"]), seed)
        z = np.asarray(p["z"], dtype=np.float64).reshape(mdp.reward_shape)
        drift = np.max(np.abs(expected_reward(mdp, z)))
        if drift > 1e-9 * (1.0 + np.max(np.abs(z))):
            raise ValueError(f"z has non-zero expectation under the dynamics (max {drift:.3g})")
        return r + z
    slack = p.get("slack")
    return apply_optimality_preserving(
        r, mdp, np.asarray(p["psi"], dtype=np.float64), seed, None if slack is None else np.asarray(slack)
    )


def apply_transform_spec(spec: TransformSpec, r: np.ndarray, mdp: Mdp, seed: int = 0) -> np.ndarray:
    """Apply ``spec`` and its ``then`` chain left to right; step ``i`` draws from seed ``(seed, i)``."""
    out = check_reward(mdp, r).copy()
    for i, step in enumerate(spec.flatten()):
        step_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        out = _apply_step(step, out, mdp, step_seed)
    return out
