"""Tabular MDP container with validation, seeded generators and JSON helpers.

Rewards are plain ``numpy`` arrays of shape ``(S, A, S)`` indexed by
``(state, action, next_state)``.  Policies are ``(S, A)`` arrays of action
probabilities.  A set-valued policy is a tuple holding, for each state, the
sorted tuple of allowed actions.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

ROW_TOL = 1e-12
MAX_RESAMPLE_ATTEMPTS = 1000

SetPolicy = tuple[tuple[int, ...], ...]


class DegenerateConfigError(RuntimeError):
    """A generator could not produce a valid instance for the requested configuration."""


def _frozen(array: Any, ndim: int, name: str) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    if out.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Mdp:
    """Environment without a reward: dynamics plus start distribution and discount.

    Arrays are copied on construction and made read-only, so instances can be
    shared freely.  Equality is elementwise and instances are hashable, which
    lets per-environment projection bases be cached.
    """

    transition: np.ndarray
    initial: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        transition = _frozen(self.transition, 3, "transition")
        initial = _frozen(self.initial, 1, "initial")
        n_states, _, n_next = transition.shape
        if n_states != n_next or n_states == 0 or transition.shape[1] == 0:
            raise ValueError(f"transition must have shape (S, A, S) with S, A >= 1, got {transition.shape}")
        if initial.shape != (n_states,):
            raise ValueError(f"initial must have length {n_states}, got {initial.shape}")
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def reward_shape(self) -> tuple[int, int, int]:
        return (self.n_states, self.n_actions, self.n_states)

    def with_gamma(self, gamma: float) -> "Mdp":
        return Mdp(self.transition, self.initial, gamma)

    def with_transition(self, transition: np.ndarray) -> "Mdp":
        return Mdp(transition, self.initial, self.gamma)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mdp):
            return NotImplemented
        return (
            self.gamma == other.gamma
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.initial, other.initial)
        )

    def __hash__(self) -> int:
        digest = hashlib.blake2b(digest_size=16)
        digest.update(np.asarray(self.transition.shape, dtype=np.int64).tobytes())
        digest.update(self.transition.tobytes())
        digest.update(self.initial.tobytes())
        digest.update(np.float64(self.gamma).tobytes())
        return int.from_bytes(digest.digest()[:8], "little", signed=True)


def reachable_states(mdp: Mdp) -> np.ndarray:
    """Boolean mask of states reachable from the support of the initial distribution."""
    successors = (mdp.transition > 0).any(axis=1)
    seen = mdp.initial > 0
    queue = deque(np.flatnonzero(seen))
    while queue:
        state = queue.popleft()
        for nxt in np.flatnonzero(successors[state] & ~seen):
            seen[nxt] = True
            queue.append(nxt)
    return seen


def validate_mdp(mdp: Mdp) -> list[str]:
    """Return a list of violated invariants; an empty list means the MDP is valid."""
    problems: list[str] = []
    if not (0.0 < mdp.gamma < 1.0):
        problems.append(f"gamma {mdp.gamma!r} outside the open interval (0, 1)")
    if not np.all(np.isfinite(mdp.transition)):
        problems.append("transition contains non-finite entries")
    if not np.all(np.isfinite(mdp.initial)):
        problems.append("initial contains non-finite entries")
    if problems:
        return problems

    for s, a in zip(*np.nonzero((mdp.transition < 0).any(axis=2))):
        problems.append(f"negative probability at ({s},{a})")
    row_sums = mdp.transition.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(row_sums - 1.0) > ROW_TOL)):
        problems.append(f"row-stochastic violation at ({s},{a}): sum {row_sums[s, a]!r}")
    if np.any(mdp.initial < 0):
        problems.append("initial distribution has negative entries")
    if abs(mdp.initial.sum() - 1.0) > ROW_TOL:
        problems.append(f"initial distribution sums to {mdp.initial.sum()!r}")
    if not problems:
        for state in np.flatnonzero(~reachable_states(mdp)):
            problems.append(f"unreachable state {state}")
    return problems


def random_mdp(n_states: int, n_actions: int, gamma: float, sparsity: float, seed: int) -> Mdp:
    """Draw a reachable MDP with Dirichlet(1) transition rows and start distribution.

    Each transition entry is dropped with probability ``sparsity`` (a row
    always keeps its largest entry) and the row renormalised.  Draws that
    leave some state unreachable are discarded and redrawn.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be positive")
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")
    if not (0.0 <= sparsity <= 1.0):
        raise ValueError(f"sparsity must lie in [0, 1], got {sparsity!r}")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RESAMPLE_ATTEMPTS):
        transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
        if sparsity > 0:
            keep = rng.random(transition.shape) >= sparsity
            keep |= transition == transition.max(axis=2, keepdims=True)
            transition = np.where(keep, transition, 0.0)
            transition /= transition.sum(axis=2, keepdims=True)
        initial = rng.dirichlet(np.ones(n_states))
        mdp = Mdp(transition, initial, gamma)
        if reachable_states(mdp).all():
            return mdp
    raise DegenerateConfigError(
        f"no reachable MDP found in {MAX_RESAMPLE_ATTEMPTS} draws "
        f"(n_states={n_states}, n_actions={n_actions}, sparsity={sparsity})"
    )


def random_reward(mdp: Mdp, scale: float, seed: int) -> np.ndarray:
    """I.i.d. uniform rewards on ``[-scale, scale]``."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale!r}")
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=mdp.reward_shape)


def random_policy(mdp: Mdp, seed: int, concentration: float = 1.0) -> np.ndarray:
    """Full-support stochastic policy with Dirichlet rows."""
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.full(mdp.n_actions, concentration), size=mdp.n_states)


def reward_flat(r: np.ndarray) -> np.ndarray:
    """Flatten with index ``s*(A*S) + a*S + s'`` (C order)."""
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 3 or r.shape[0] != r.shape[2]:
        raise ValueError(f"reward must have shape (S, A, S), got {r.shape}")
    return r.reshape(-1).copy()


def reward_unflat(v: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    expected = n_states * n_actions * n_states
    if v.shape != (expected,):
        raise ValueError(f"flat reward must have length {expected}, got shape {v.shape}")
    return v.reshape(n_states, n_actions, n_states).copy()


def check_reward(mdp: Mdp, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != mdp.reward_shape:
        raise ValueError(f"reward shape {r.shape} does not match MDP {mdp.reward_shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("reward contains non-finite entries")
    return r


def check_policy(mdp: Mdp, pi: np.ndarray) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {pi.shape} does not match ({mdp.n_states}, {mdp.n_actions})")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > ROW_TOL):
        raise ValueError("policy rows must be probability distributions")
    return pi


# ---------------------------------------------------------------------------
# JSON IO.  ``json`` writes floats with ``repr``, the shortest string that
# parses back to the same double, so every file below round-trips bit-exactly.


def _require_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite values")


def mdp_to_dict(mdp: Mdp) -> dict[str, Any]:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "initial": mdp.initial.tolist(),
        "transition": mdp.transition.tolist(),
    }


def mdp_from_dict(data: dict[str, Any]) -> Mdp:
    """Parse and validate; rows within ``ROW_TOL`` of stochastic are renormalised."""
    try:
        n_states = int(data["n_states"])
        n_actions = int(data["n_actions"])
        transition = np.asarray(data["transition"], dtype=np.float64)
        initial = np.asarray(data["initial"], dtype=np.float64)
        gamma = float(data["gamma"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed MDP document: {exc}") from exc
    if transition.shape != (n_states, n_actions, n_states):
        raise ValueError(f"transition shape {transition.shape} does not match n_states/n_actions")
    _require_finite(transition, "transition")
    _require_finite(initial, "initial")
    mdp = Mdp(transition, initial, gamma)
    problems = validate_mdp(mdp)
    if problems:
        raise ValueError("invalid MDP: " + "; ".join(problems))
    return Mdp(
        transition / transition.sum(axis=2, keepdims=True),
        initial / initial.sum(),
        gamma,
    )


def reward_to_dict(r: np.ndarray) -> dict[str, Any]:
    return {"values": reward_flat(r).tolist()}


def reward_from_dict(data: dict[str, Any], mdp: Mdp) -> np.ndarray:
    try:
        values = np.asarray(data["values"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed reward document: {exc}") from exc
    return check_reward(mdp, reward_unflat(values, mdp.n_states, mdp.n_actions))


def potential_from_dict(data: dict[str, Any], mdp: Mdp) -> np.ndarray:
    try:
        phi = np.asarray(data["phi"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed potential document: {exc}") from exc
    if phi.shape != (mdp.n_states,):
        raise ValueError(f"potential must have length {mdp.n_states}")
    _require_finite(phi, "potential")
    return phi


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc


def write_json(path: str | Path, data: Any) -> None:
    Path(path).write_text(json.dumps(data, allow_nan=False) + "\n", encoding="utf-8")


def load_mdp(path: str | Path) -> Mdp:
    return mdp_from_dict(read_json(path))


def save_mdp(path: str | Path, mdp: Mdp) -> None:
    write_json(path, mdp_to_dict(mdp))


def load_reward(path: str | Path, mdp: Mdp) -> np.ndarray:
    return reward_from_dict(read_json(path), mdp)


def save_reward(path: str | Path, r: np.ndarray) -> None:
    write_json(path, reward_to_dict(r))
