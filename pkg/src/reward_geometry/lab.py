"""Seeded experiments that check identifiability and misspecification claims numerically.

Each experiment returns an :class:`ExperimentReport` whose verdict is computed
only from its metrics and its declared thresholds.  Trials draw their
randomness from ``SeedSequence([seed, trial])``, so running trials in
parallel or in sequence gives identical reports.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .behaviour import (
    BehaviouralModelConfig,
    ModelKind,
    boltzmann_policy,
    max_supportive_optimal,
    mce_policy,
)
from .mdp import Mdp, mdp_from_dict, random_mdp, random_reward, reward_flat
from .solvers import (
    DEFAULT_CAP,
    OrderVerdict,
    deterministic_action_table,
    policy_order_oracle,
    soft_value_iteration,
    state_visitation,
    value_iteration,
)
from .starc import canon_minimal_l2, starc_distance
from .transforms import (
    adversarial_tau_target,
    apply_optimality_preserving,
    apply_potential_shaping,
    random_redistribution,
    transfer_construction_gamma,
    transfer_construction_tau,
)

LAB_TOL = 1e-12
THREADS_ENV = "REWARD_GEOMETRY_THREADS"


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class Threshold:
    metric: str
    op: str  # "<=" or ">="
    value: float

    def holds(self, metrics: dict[str, float]) -> bool:
        observed = metrics[self.metric]
        return observed <= self.value if self.op == "<=" else observed >= self.value

    def to_dict(self) -> dict[str, Any]:
        return {"metric": self.metric, "op": self.op, "value": self.value}


@dataclass
class ExperimentReport:
    name: str
    seed: int
    trials: int
    metrics: dict[str, float]
    thresholds: list[Threshold]
    provenance: list[str]
    trial_metrics: list[dict[str, float]] = field(default_factory=list)
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = {t.metric for t in self.thresholds} - set(self.metrics)
        if missing:
            raise ValueError(f"thresholds refer to unknown metrics {sorted(missing)}")
        if not self.provenance:
            raise ValueError("a report must name the claims it checks")

    @property
    def verdict(self) -> bool:
        return all(t.holds(self.metrics) for t in self.thresholds)

    def failed_thresholds(self) -> list[Threshold]:
        return [t for t in self.thresholds if not t.holds(self.metrics)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "trials": self.trials,
            "params": self.params,
            "metrics": self.metrics,
            "thresholds": [t.to_dict() for t in self.thresholds],
            "verdict": "pass" if self.verdict else "fail",
            "provenance": self.provenance,
            "trial_metrics": self.trial_metrics,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentReport":
        return cls(
            name=data["name"],
            seed=int(data["seed"]),
            trials=int(data["trials"]),
            metrics={k: float(v) for k, v in data["metrics"].items()},
            thresholds=[Threshold(t["metric"], t["op"], float(t["value"])) for t in data["thresholds"]],
            provenance=list(data["provenance"]),
            trial_metrics=[{k: float(v) for k, v in row.items()} for row in data.get("trial_metrics", [])],
            params=dict(data.get("params", {})),
        )

    def to_csv(self) -> str:
        """One ``trial,metric,value`` row per trial metric, then the summary metrics."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["trial", "metric", "value"])
        for i, row in enumerate(self.trial_metrics):
            for key, value in row.items():
                writer.writerow([i, key, repr(float(value))])
        for key, value in self.metrics.items():
            writer.writerow(["summary", key, repr(float(value))])
        return buffer.getvalue()


# ---------------------------------------------------------------------------
# Seeding and parallel trials


def trial_seed(seed: int, *path: int) -> int:
    """Deterministic 32-bit seed derived from ``seed`` and an index path."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
        if value < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return value
    return os.cpu_count() or 1


def run_trials(fn: Callable[[int], dict[str, float]], seed: int, trials: int) -> list[dict[str, float]]:
    """Run ``fn(trial_seed(seed, i))`` for each trial, preserving trial order."""
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    seeds = [trial_seed(seed, i) for i in range(trials)]
    workers = min(worker_count(), trials)
    if workers == 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def _column(rows: list[dict[str, float]], key: str) -> np.ndarray:
    return np.array([row[key] for row in rows], dtype=np.float64)


# ---------------------------------------------------------------------------
# Invariance of behavioural models


def experiment_invariance(
    model: BehaviouralModelConfig, mdp: Mdp, trials: int, seed: int, tol: float = LAB_TOL
) -> ExperimentReport:
    """Apply random transformations from the model's invariance class and compare policies.

    Boltzmann and MCE models get a random potential shaping combined with a
    random S'-redistribution.  The optimal model gets an optimality-preserving
    transformation built from a random value-like vector.
    """
    stochastic = model.kind is not ModelKind.OPTIMAL

    def policy(r: np.ndarray) -> np.ndarray:
        if model.kind is ModelKind.BOLTZMANN:
            return boltzmann_policy(mdp, r, model.beta, tol)
        return mce_policy(mdp, r, model.alpha, tol)

    def trial(sub: int) -> dict[str, float]:
        rng = np.random.default_rng(sub)
        r = random_reward(mdp, float(rng.uniform(0.5, 2.0)), trial_seed(sub, 0))
        if stochastic:
            phi = rng.normal(scale=float(rng.uniform(0.1, 5.0)), size=mdp.n_states)
            z = random_redistribution(mdp, float(rng.uniform(0.0, 3.0)), rng)
            if rng.random() < 0.5:
                transformed = apply_potential_shaping(r + z, phi, mdp.gamma)
            else:
                transformed = apply_potential_shaping(r, phi, mdp.gamma) + z
            gap = float(np.max(np.abs(policy(r) - policy(transformed))))
            return {"policy_gap": gap, "starc": starc_distance(r, transformed, mdp)}
        psi = rng.normal(scale=float(rng.uniform(0.1, 5.0)), size=mdp.n_states)
        transformed = apply_optimality_preserving(r, mdp, psi, trial_seed(sub, 1), tol=tol)
        same = max_supportive_optimal(mdp, r, tol) == max_supportive_optimal(mdp, transformed, tol)
        return {"set_mismatch": float(not same), "starc": starc_distance(r, transformed, mdp)}

    rows = run_trials(trial, seed, trials)
    if stochastic:
        metrics = {
            "max_policy_gap": float(_column(rows, "policy_gap").max()),
            "max_starc": float(_column(rows, "starc").max()),
        }
        thresholds = [Threshold("max_policy_gap", "<=", 1e-8), Threshold("max_starc", "<=", 1e-8)]
        claim = "policy unchanged by potential shaping combined with S'-redistribution"
    else:
        metrics = {
            "set_mismatches": float(_column(rows, "set_mismatch").sum()),
            "max_starc": float(_column(rows, "starc").max()),
        }
        thresholds = [Threshold("set_mismatches", "<=", 0.0)]
        claim = "optimal action sets unchanged by optimality-preserving transformations"
    return ExperimentReport(
        name="invariance",
        seed=seed,
        trials=trials,
        metrics=metrics,
        thresholds=thresholds,
        provenance=[f"{model.kind.value} model: {claim}"],
        trial_metrics=rows,
        params={"model": model.kind.value, "beta": model.beta, "alpha": model.alpha},
    )


# ---------------------------------------------------------------------------
# Misspecified dynamics


def sweep_multipliers(scale: float, low_exp: int = -2, high_exp: int = 4) -> np.ndarray:
    return scale * 10.0 ** np.arange(low_exp, high_exp + 1)


def gridworld_mdp(n: int = 5, gamma: float = 0.9, slippery: bool = True) -> Mdp:
    """``n x n`` torus with actions up, right, down, left.

    With ``slippery`` the agent moves in the intended direction or in one of
    the two diagonals next to it, each with probability 1/3.  Otherwise it
    moves deterministically.  Start states are uniform.
    """
    moves = [(-1, 0), (0, 1), (1, 0), (0, -1)]
    transition = np.zeros((n * n, 4, n * n))
    for row in range(n):
        for col in range(n):
            s = row * n + col
            for a, (dr, dc) in enumerate(moves):
                if slippery:
                    sideways = [(dc, dr), (-dc, -dr)]  # the two perpendicular offsets
                    outcomes = [(dr, dc)] + [(dr + sr, dc + sc) for sr, sc in sideways]
                else:
                    outcomes = [(dr, dc)]
                for orow, ocol in outcomes:
                    nxt = ((row + orow) % n) * n + (col + ocol) % n
                    transition[s, a, nxt] += 1.0 / len(outcomes)
    return Mdp(transition, np.full(n * n, 1.0 / (n * n)), gamma)


def gridworld_rewards(n: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Two rewards defined by the displacement of a step; other transitions pay 0.

    Under the slippery dynamics the second reward's expected value is one
    third of the first's in every state and action; under deterministic
    dynamics the two prefer opposite horizontal directions.
    """
    first = {(-1, 0): 0, (-1, 1): 1, (0, 1): 1, (1, 1): 1, (1, 0): 0, (1, -1): -1, (0, -1): -1, (-1, -1): -1}
    second = {(-1, 0): 0, (-1, 1): 3, (0, 1): -1, (1, 1): -1, (1, 0): 0, (1, -1): 1, (0, -1): 1, (-1, -1): -3}
    size = n * n
    r1 = np.zeros((size, 4, size))
    r2 = np.zeros((size, 4, size))
    for s in range(size):
        for s_next in range(size):
            d_row = (s_next // n - s // n + 1) % n - 1
            d_col = (s_next % n - s % n + 1) % n - 1
            key = (d_row, d_col)
            if key in first:
                r1[s, :, s_next] = first[key]
                r2[s, :, s_next] = second[key]
    return r1, r2


def gridworld_comparison(n: int = 5, gamma: float = 0.9) -> dict[str, float]:
    slippery = gridworld_mdp(n, gamma, slippery=True)
    deterministic = gridworld_mdp(n, gamma, slippery=False)
    r1, r2 = gridworld_rewards(n)
    sets_differ = max_supportive_optimal(deterministic, r1) != max_supportive_optimal(deterministic, r2)
    return {
        "gridworld_starc_slippery": starc_distance(r1, r2, slippery),
        "gridworld_starc_deterministic": starc_distance(r1, r2, deterministic),
        "gridworld_optimal_sets_differ": float(sets_differ),
    }


def experiment_transfer_tau(
    mdp1_seed: int,
    trials: int,
    alpha_scale: float,
    seed: int,
    n_states: int = 4,
    n_actions: int = 2,
    gamma: float = 0.9,
    include_gridworld: bool = True,
) -> ExperimentReport:
    """Rewards equivalent under one transition function but far apart under another.

    Each trial draws two transition functions plus a reward ``r``, then a direction ``d`` that
    has zero expectation under the first dynamics while matching ``-r`` in
    expectation under the second.  Distances of ``r`` to ``r + alpha*d`` are
    recorded over a sweep of ``alpha``.
    """
    if alpha_scale <= 0:
        raise ValueError(f"alpha_scale must be positive, got {alpha_scale!r}")

    def trial(sub: int) -> dict[str, float]:
        index = trial_seed(sub, 0)
        mdp1 = random_mdp(n_states, n_actions, gamma, 0.0, trial_seed(mdp1_seed, index, 0))
        tau2 = random_mdp(n_states, n_actions, gamma, 0.0, trial_seed(mdp1_seed, index, 1)).transition
        if np.allclose(mdp1.transition, tau2, rtol=0.0, atol=1e-12):
            raise ValueError("the two transition functions coincide everywhere")
        mdp2 = mdp1.with_transition(tau2)
        r = random_reward(mdp1, 1.0, trial_seed(sub, 1))
        target = adversarial_tau_target(r, mdp1.transition, tau2)
        direction = transfer_construction_tau(np.zeros_like(r), mdp1.transition, tau2, target)
        alphas = sweep_multipliers(alpha_scale * float(np.linalg.norm(reward_flat(r))))
        d1 = [starc_distance(r, r + a * direction, mdp1) for a in alphas]
        d1 += [starc_distance(r - a * direction, r + a * direction, mdp1) for a in alphas]
        top = alphas[-1]
        return {
            "starc_tau1": float(max(d1)),
            "starc_tau2_at_max_alpha": starc_distance(r, r + top * direction, mdp2),
            "symmetric_starc_tau2": starc_distance(r - top * direction, r + top * direction, mdp2),
        }

    rows = run_trials(trial, seed, trials)
    metrics = {
        "max_starc_tau1": float(_column(rows, "starc_tau1").max()),
        "min_starc_tau2": float(_column(rows, "starc_tau2_at_max_alpha").min()),
        "min_symmetric_starc_tau2": float(_column(rows, "symmetric_starc_tau2").min()),
    }
    thresholds = [Threshold("max_starc_tau1", "<=", 1e-8), Threshold("min_starc_tau2", ">=", 0.99)]
    provenance = ["rewards equal up to S'-redistribution under one dynamics can be maximally far apart under another"]
    if include_gridworld:
        metrics.update(gridworld_comparison())
        thresholds += [
            Threshold("gridworld_starc_slippery", "<=", 1e-9),
            Threshold("gridworld_starc_deterministic", ">=", 1e-3),
            Threshold("gridworld_optimal_sets_differ", ">=", 1.0),
        ]
        provenance.append("torus gridworld reward pair: equivalent when slippery, opposed when deterministic")
    return ExperimentReport(
        name="transfer_tau",
        seed=seed,
        trials=trials,
        metrics=metrics,
        thresholds=thresholds,
        provenance=provenance,
        trial_metrics=rows,
        params={"mdp1_seed": mdp1_seed, "alpha_scale": alpha_scale, "n_states": n_states,
                "n_actions": n_actions, "gamma": gamma},
    )


# ---------------------------------------------------------------------------
# Misspecified discount


def is_trivial_dynamics(mdp: Mdp) -> bool:
    """True when no state's next-state distribution depends on the action."""
    return bool(np.all(np.isclose(mdp.transition, mdp.transition[:, :1, :], rtol=0.0, atol=1e-12)))


def controllable_states(mdp: Mdp, cap: int = DEFAULT_CAP, threshold: float = 1e-9) -> list[int]:
    """States whose discounted visitation differs between two deterministic policies."""
    eye = np.eye(mdp.n_actions)
    visits = np.array([state_visitation(mdp, eye[row]) for row in deterministic_action_table(mdp, cap)])
    return [int(s) for s in np.flatnonzero(np.ptp(visits, axis=0) >= threshold)]


def three_state_chain(gamma: float) -> Mdp:
    """Start in state 0; action 0 jumps to state 2, action 1 goes through state 1.

    State 1 moves to state 2 under both actions and state 2 is absorbing.
    """
    transition = np.zeros((3, 2, 3))
    transition[0, 0, 2] = 1.0
    transition[0, 1, 1] = 1.0
    transition[1, :, 2] = 1.0
    transition[2, :, 2] = 1.0
    return Mdp(transition, np.array([1.0, 0.0, 0.0]), gamma)


def three_state_reward() -> np.ndarray:
    """Pays 1 for the direct jump and 1 for leaving state 1; the detour starts with 0."""
    r = np.zeros((3, 2, 3))
    r[0, 0, 2] = 1.0
    r[1, :, 2] = 1.0
    return r


def _start_advantage(mdp: Mdp, r: np.ndarray) -> float:
    q = value_iteration(mdp, r, LAB_TOL).q_star
    return float(q[0, 1] - q[0, 0])


def three_state_flip(gamma1: float, gamma2: float) -> dict[str, float]:
    """Flip point of the start-state choice as the detour is rewarded by ``gamma1``-shaping.

    Adding ``x`` times the ``gamma1``-shaping of the indicator of state 1
    changes the detour's value under ``gamma2`` by ``(gamma1 - gamma2) * x``,
    so the preference flips at ``x = -gap / (gamma1 - gamma2)``.  The flip is
    also located numerically by bisection on the solver output.
    """
    if gamma1 == gamma2:
        raise ValueError("gamma1 and gamma2 must differ")
    mdp = three_state_chain(gamma2)
    r = three_state_reward()
    shaping = transfer_construction_gamma(gamma1, 1, 1.0, mdp)
    analytic = -_start_advantage(mdp, r) / (gamma1 - gamma2)

    def prefers_detour(x: float) -> bool:
        return _start_advantage(mdp, r + x * shaping) > 0

    base = prefers_detour(0.0)
    grid = np.concatenate([-(10.0 ** np.linspace(-3, 3, 61)), 10.0 ** np.linspace(-3, 3, 61)])
    grid = grid[np.argsort(np.abs(grid), kind="stable")]
    flipped = [x for x in grid if prefers_detour(float(x)) != base]
    if not flipped:
        return {"threshold_analytic": analytic, "threshold_numeric": float("nan"), "threshold_rel_error": float("inf")}
    far = float(flipped[0])
    near = 0.0
    for _ in range(200):
        mid = 0.5 * (near + far)
        if prefers_detour(mid) == base:
            near = mid
        else:
            far = mid
    numeric = 0.5 * (near + far)
    return {
        "threshold_analytic": analytic,
        "threshold_numeric": numeric,
        "threshold_rel_error": abs(numeric - analytic) / abs(analytic),
    }


def experiment_transfer_gamma(
    gamma1: float, gamma2: float, mdp: Mdp, trials: int, x_scale: float, seed: int
) -> ExperimentReport:
    """Shaping under one discount acts as a real reward change under another.

    For each trial a controllable state is picked and the ``gamma1``-shaping
    of its indicator potential is added to and subtracted from a random
    reward with growing weight ``x``.  Both rewards are equivalent to the
    original under ``gamma1``; under ``gamma2`` they approach opposite
    directions.
    """
    for g in (gamma1, gamma2):
        if not 0 < g < 1:
            raise ValueError(f"discounts must lie in (0, 1), got {g!r}")
    if gamma1 == gamma2:
        raise ValueError("gamma1 and gamma2 must differ")
    if x_scale <= 0:
        raise ValueError(f"x_scale must be positive, got {x_scale!r}")
    if is_trivial_dynamics(mdp):
        raise ValueError("transition function is trivial: no state's dynamics depend on the action")
    mdp1, mdp2 = mdp.with_gamma(gamma1), mdp.with_gamma(gamma2)
    candidates = controllable_states(mdp2)
    if not candidates:
        raise ValueError("no controllable state under gamma2")

    def trial(sub: int) -> dict[str, float]:
        rng = np.random.default_rng(sub)
        state = int(rng.choice(candidates))
        r = random_reward(mdp, 1.0, trial_seed(sub, 0))
        shaping = transfer_construction_gamma(gamma1, state, 1.0, mdp)
        xs = sweep_multipliers(x_scale * float(np.linalg.norm(reward_flat(r))))
        d1 = [starc_distance(r, r + sign * x * shaping, mdp1) for x in xs for sign in (1.0, -1.0)]
        top = xs[-1]
        return {
            "state": float(state),
            "starc_gamma1": float(max(d1)),
            "symmetric_starc_gamma2": starc_distance(r - top * shaping, r + top * shaping, mdp2),
            "one_sided_starc_gamma2": starc_distance(r, r + top * shaping, mdp2),
        }

    rows = run_trials(trial, seed, trials)
    metrics = {
        "max_starc_gamma1": float(_column(rows, "starc_gamma1").max()),
        "min_symmetric_starc_gamma2": float(_column(rows, "symmetric_starc_gamma2").min()),
        "min_one_sided_starc_gamma2": float(_column(rows, "one_sided_starc_gamma2").min()),
    }
    metrics.update(three_state_flip(gamma1, gamma2))
    return ExperimentReport(
        name="transfer_gamma",
        seed=seed,
        trials=trials,
        metrics=metrics,
        thresholds=[
            Threshold("max_starc_gamma1", "<=", 1e-8),
            Threshold("min_symmetric_starc_gamma2", ">=", 0.99),
            Threshold("threshold_rel_error", "<=", 0.01),
        ],
        provenance=[
            "potential shaping under one discount is a non-trivial reward change under another discount",
            "three-state chain: the start-state preference flips at the solved shaping weight",
        ],
        trial_metrics=rows,
        params={"gamma1": gamma1, "gamma2": gamma2, "x_scale": x_scale},
    )


# ---------------------------------------------------------------------------
# Misspecified model parameters


def experiment_param_misspec(
    kind: ModelKind | str, mdp: Mdp, trials: int, seed: int, tol: float = LAB_TOL
) -> ExperimentReport:
    """Rescaling the reward is equivalent to rescaling the model parameter.

    Boltzmann: ``b(c*R, beta) = b(R, c*beta)``.  MCE: ``Q_soft(c*R, alpha) =
    c * Q_soft(R, alpha/c)`` and hence ``pi(c*R, alpha) = pi(R, alpha/c)``.  A
    reward fitted with the wrong parameter is therefore a positive multiple
    of the true one and orders policies identically.
    """
    kind = ModelKind(kind)
    if kind is ModelKind.OPTIMAL:
        raise ValueError("parameter misspecification applies to boltzmann and mce models only")

    def trial(sub: int) -> dict[str, float]:
        rng = np.random.default_rng(sub)
        r = random_reward(mdp, 1.0, trial_seed(sub, 0))
        c = float(np.exp(rng.uniform(np.log(0.2), np.log(5.0))))
        true_param = float(np.exp(rng.uniform(np.log(0.5), np.log(5.0))))
        wrong_param = float(np.exp(rng.uniform(np.log(0.5), np.log(5.0))))
        row: dict[str, float] = {"c": c}
        if kind is ModelKind.BOLTZMANN:
            row["transfer_gap"] = float(
                np.max(np.abs(boltzmann_policy(mdp, c * r, true_param, tol) - boltzmann_policy(mdp, r, c * true_param, tol)))
            )
            fitted = (true_param / wrong_param) * r
            row["fit_gap"] = float(
                np.max(np.abs(boltzmann_policy(mdp, fitted, wrong_param, tol) - boltzmann_policy(mdp, r, true_param, tol)))
            )
            row["softq_gap"] = 0.0
        else:
            scaled = soft_value_iteration(mdp, c * r, true_param, tol).q_soft
            reference = c * soft_value_iteration(mdp, r, true_param / c, tol).q_soft
            row["softq_gap"] = float(np.max(np.abs(scaled - reference)) / (1.0 + np.max(np.abs(reference))))
            row["transfer_gap"] = float(
                np.max(np.abs(mce_policy(mdp, c * r, true_param, tol) - mce_policy(mdp, r, true_param / c, tol)))
            )
            fitted = (wrong_param / true_param) * r
            row["fit_gap"] = float(
                np.max(np.abs(mce_policy(mdp, fitted, wrong_param, tol) - mce_policy(mdp, r, true_param, tol)))
            )
        same = policy_order_oracle(mdp, r, fitted) is OrderVerdict.SAME_ORDER
        row["different_order"] = float(not same)
        return row

    rows = run_trials(trial, seed, trials)
    metrics = {
        "max_transfer_gap": float(_column(rows, "transfer_gap").max()),
        "max_fit_gap": float(_column(rows, "fit_gap").max()),
        "max_softq_gap": float(_column(rows, "softq_gap").max()),
        "different_order_count": float(_column(rows, "different_order").sum()),
    }
    return ExperimentReport(
        name="param_misspec",
        seed=seed,
        trials=trials,
        metrics=metrics,
        thresholds=[
            Threshold("max_transfer_gap", "<=", 1e-8),
            Threshold("max_fit_gap", "<=", 1e-8),
            Threshold("max_softq_gap", "<=", 1e-7),
            Threshold("different_order_count", "<=", 0.0),
        ],
        provenance=[f"{kind.value} model: a wrong temperature only rescales the inferred reward, preserving policy order"],
        trial_metrics=rows,
        params={"model": kind.value},
    )


# ---------------------------------------------------------------------------
# Perturbations


DEFAULT_C_GRID = tuple(10.0 ** -np.arange(0, 9))


def experiment_perturbation(
    mdp: Mdp,
    delta_grid: list[float],
    seed: int,
    beta: float = 1.0,
    c_grid: tuple[float, ...] = DEFAULT_C_GRID,
) -> ExperimentReport:
    """Opposite rewards ``c*R`` and ``-c*R`` give ever closer Boltzmann policies as ``c`` shrinks.

    Their STARC distance stays 1 throughout, so no positive policy distance
    can be guaranteed from a reward distance below 1.
    """
    if not delta_grid or min(delta_grid) <= 0:
        raise ValueError("delta_grid must be a non-empty list of positive numbers")
    if not c_grid or min(c_grid) <= 0:
        raise ValueError("c_grid must contain positive scales")
    r = canon_minimal_l2(random_reward(mdp, 1.0, trial_seed(seed, 0)), mdp)
    if np.linalg.norm(reward_flat(r)) <= 1e-9:
        raise ValueError("sampled reward is trivial for this MDP")
    rows = []
    for c in c_grid:
        gap = float(np.linalg.norm(boltzmann_policy(mdp, c * r, beta) - boltzmann_policy(mdp, -c * r, beta)))
        rows.append({"c": float(c), "policy_gap": gap, "starc": starc_distance(c * r, -c * r, mdp)})
    gaps = _column(rows, "policy_gap")
    reached = [bool(np.any(gaps < delta)) for delta in delta_grid]
    metrics = {
        "min_policy_gap": float(gaps.min()),
        "policy_gap_at_smallest_c": float(gaps[int(np.argmin(c_grid))]),
        "max_starc_deviation": float(np.max(np.abs(_column(rows, "starc") - 1.0))),
        "fraction_deltas_reached": float(np.mean(reached)),
    }
    return ExperimentReport(
        name="perturbation",
        seed=seed,
        trials=len(c_grid),
        metrics=metrics,
        thresholds=[Threshold("max_starc_deviation", "<=", 1e-9), Threshold("fraction_deltas_reached", ">=", 1.0)],
        provenance=["rewards at STARC distance 1 can induce arbitrarily close Boltzmann policies"],
        trial_metrics=rows,
        params={"delta_grid": list(map(float, delta_grid)), "beta": beta},
    )


# ---------------------------------------------------------------------------
# Policies that take optimal actions most often


def policy_argmax_sets(pi: np.ndarray, rel_tol: float = 1e-9) -> tuple[tuple[int, ...], ...]:
    top = pi.max(axis=1, keepdims=True)
    return tuple(tuple(int(a) for a in np.flatnonzero(row >= (1.0 - rel_tol) * t)) for row, t in zip(pi, top))


def f_class_membership(mdp: Mdp, pi: np.ndarray, r: np.ndarray, tol: float = LAB_TOL) -> bool:
    """Full support, and in every state the most likely actions are exactly the optimal ones."""
    pi = np.asarray(pi, dtype=np.float64)
    if np.any(pi <= 0):
        return False
    return policy_argmax_sets(pi) == value_iteration(mdp, r, tol).optimal_actions


@dataclass(frozen=True)
class MceWitness:
    mdp_seed: int
    reward_seed: int
    alpha: float
    mdp: Mdp
    reward: np.ndarray


def find_mce_outside_f_witness(
    seed: int, max_seeds: int = 200, n_states: int = 3, n_actions: int = 2, gamma: float = 0.9
) -> MceWitness | None:
    """Search for an MCE policy whose most likely action is not optimal.

    Returns ``None`` when no witness appears within ``max_seeds`` instances.
    """
    for i in range(max_seeds):
        mdp_seed, reward_seed = trial_seed(seed, i, 0), trial_seed(seed, i, 1)
        mdp = random_mdp(n_states, n_actions, gamma, 0.5, mdp_seed)
        r = random_reward(mdp, 1.0, reward_seed)
        for alpha in (0.3, 1.0, 3.0):
            if not f_class_membership(mdp, mce_policy(mdp, r, alpha, LAB_TOL), r):
                return MceWitness(mdp_seed, reward_seed, alpha, mdp, r)
    return None


def experiment_f_class(mdp: Mdp, trials: int, seed: int, beta: float = 1.0, max_seeds: int = 200) -> ExperimentReport:
    """Boltzmann policies always belong to the class; an MCE counterexample is searched for."""

    def trial(sub: int) -> dict[str, float]:
        r = random_reward(mdp, 1.0, sub)
        return {"boltzmann_member": float(f_class_membership(mdp, boltzmann_policy(mdp, r, beta), r))}

    rows = run_trials(trial, seed, trials)
    witness = find_mce_outside_f_witness(seed, max_seeds)
    metrics = {
        "boltzmann_nonmembers": float(trials - _column(rows, "boltzmann_member").sum()),
        "mce_witness_found": float(witness is not None),
    }
    params: dict[str, Any] = {"beta": beta, "max_seeds": max_seeds}
    if witness is not None:
        params["mce_witness"] = {"mdp_seed": witness.mdp_seed, "reward_seed": witness.reward_seed, "alpha": witness.alpha}
    return ExperimentReport(
        name="f_class",
        seed=seed,
        trials=trials,
        metrics=metrics,
        thresholds=[Threshold("boltzmann_nonmembers", "<=", 0.0)],
        provenance=[
            "Boltzmann policies put the most mass on optimal actions",
            "MCE policies can put the most mass on a suboptimal action",
        ],
        trial_metrics=rows,
        params=params,
    )


# ---------------------------------------------------------------------------
# Config-driven dispatch


def _mdp_from_params(params: dict[str, Any]) -> Mdp:
    spec = params.get("mdp", {})
    if not isinstance(spec, dict):
        raise ValueError("'mdp' must be an object")
    if "transition" in spec:
        return mdp_from_dict(spec)
    unknown = set(spec) - {"n_states", "n_actions", "gamma", "sparsity", "seed"}
    if unknown:
        raise ValueError(f"unknown MDP generator fields {sorted(unknown)}")
    return random_mdp(
        int(spec.get("n_states", 4)),
        int(spec.get("n_actions", 3)),
        float(spec.get("gamma", 0.9)),
        float(spec.get("sparsity", 0.0)),
        int(spec.get("seed", 0)),
    )


EXPERIMENTS = ("invariance", "transfer_tau", "transfer_gamma", "param_misspec", "perturbation", "f_class")


def run_experiment_config(config: dict[str, Any]) -> ExperimentReport:
    """Run ``{"experiment", "seed", "trials", "params"}``; raises ``ValueError`` on bad configs."""
    if not isinstance(config, dict):
        raise ValueError("experiment config must be an object")
    unknown = set(config) - {"experiment", "seed", "trials", "params"}
    if unknown:
        raise ValueError(f"unknown config fields {sorted(unknown)}")
    name = config.get("experiment")
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")
    try:
        seed = int(config.get("seed", 0))
        trials = int(config.get("trials", 20))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"seed and trials must be integers: {exc}") from exc
    if seed < 0 or trials < 1:
        raise ValueError("seed must be non-negative and trials positive")
    params = dict(config.get("params", {}))

    try:
        if name == "invariance":
            model = BehaviouralModelConfig(params.get("model", "boltzmann"), params.get("beta"), params.get("alpha"))
            return experiment_invariance(model, _mdp_from_params(params), trials, seed)
        if name == "transfer_tau":
            return experiment_transfer_tau(
                int(params.get("mdp1_seed", seed)),
                trials,
                float(params.get("alpha_scale", 1.0)),
                seed,
                int(params.get("n_states", 4)),
                int(params.get("n_actions", 2)),
                float(params.get("gamma", 0.9)),
                bool(params.get("include_gridworld", True)),
            )
        if name == "transfer_gamma":
            return experiment_transfer_gamma(
                float(params.get("gamma1", 0.9)),
                float(params.get("gamma2", 0.5)),
                _mdp_from_params(params),
                trials,
                float(params.get("x_scale", 1.0)),
                seed,
            )
        if name == "param_misspec":
            return experiment_param_misspec(params.get("model", "boltzmann"), _mdp_from_params(params), trials, seed)
        if name == "perturbation":
            mdp = _mdp_from_params({"mdp": {"n_states": 3, "n_actions": 2, **params.get("mdp", {})}})
            return experiment_perturbation(
                mdp, list(params.get("delta_grid", [1e-1, 1e-2, 1e-3, 1e-4])), seed, float(params.get("beta", 1.0))
            )
        return experiment_f_class(
            _mdp_from_params(params), trials, seed, float(params.get("beta", 1.0)), int(params.get("max_seeds", 200))
        )
    except (TypeError, KeyError) as exc:
        raise ValueError(f"invalid parameters for {name}: {exc}") from exc
