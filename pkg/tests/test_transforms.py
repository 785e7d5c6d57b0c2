import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import mdps, seeds
from oracles import projection_off_trivial
from reward_geometry.behaviour import boltzmann_policy, discounted_return, max_supportive_optimal, rollout
from reward_geometry.mdp import Mdp, random_mdp, random_policy, random_reward
from reward_geometry.solvers import (
    OrderVerdict,
    expected_reward,
    j_range,
    policy_order_oracle,
    policy_return,
    value_iteration,
)
from reward_geometry.transforms import (
    SubspaceKind,
    TransformSpec,
    adversarial_tau_target,
    apply_constant_shift,
    apply_linear_scaling,
    apply_optimality_preserving,
    apply_potential_shaping,
    apply_sprime_redistribution,
    apply_transform_spec,
    combined_basis,
    decompose_difference,
    decompose_scaled_difference,
    redistribution_basis,
    same_optimal_policies,
    shaping_basis,
    transfer_construction_gamma,
    transfer_construction_tau,
)


# --- elementary transformations ------------------------------------------------


@given(mdps(), seeds)
def test_shaping_formula_and_inverse(mdp, seed):
    rng = np.random.default_rng(seed)
    r = random_reward(mdp, 1.0, seed)
    phi = rng.normal(size=mdp.n_states)
    shaped = apply_potential_shaping(r, phi, mdp.gamma)
    s, a, t = (rng.integers(mdp.n_states), rng.integers(mdp.n_actions), rng.integers(mdp.n_states))
    assert shaped[s, a, t] == pytest.approx(r[s, a, t] + mdp.gamma * phi[t] - phi[s], rel=0, abs=1e-15)
    assert np.array_equal(apply_potential_shaping(r, np.zeros(mdp.n_states), mdp.gamma), r)
    assert np.max(np.abs(apply_potential_shaping(shaped, -phi, mdp.gamma) - r)) <= 1e-15 * (1 + np.max(np.abs(phi))) * 4


def test_constant_shift_is_constant_potential_shaping():
    mdp = random_mdp(3, 2, 0.8, 0.0, 0)
    r = random_reward(mdp, 1.0, 1)
    c = 2.5
    phi = np.full(3, c / (mdp.gamma - 1.0))
    assert np.allclose(apply_potential_shaping(r, phi, mdp.gamma), r + c, atol=1e-14)


def test_scaling_and_shift_basics():
    mdp = random_mdp(3, 2, 0.9, 0.0, 3)
    r = random_reward(mdp, 1.0, 4)
    assert np.array_equal(apply_linear_scaling(r, 1.0), r)
    assert np.array_equal(apply_constant_shift(r, 0.0), r)
    assert np.max(np.abs(apply_linear_scaling(apply_linear_scaling(r, 2.0), 0.5) - r)) <= 1e-15
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            apply_linear_scaling(r, bad)
    pi = random_policy(mdp, 5)
    shift = policy_return(mdp, apply_constant_shift(r, 1.7), pi) - policy_return(mdp, r, pi)
    assert shift == pytest.approx(1.7 / (1 - mdp.gamma), abs=1e-9)


@given(mdps(), seeds, st.floats(0.0, 5.0))
def test_redistribution_preserves_expectations_and_returns(mdp, seed, magnitude):
    r = random_reward(mdp, 1.0, seed)
    out = apply_sprime_redistribution(r, mdp, magnitude, seed)
    assert np.max(np.abs(out - r)) <= magnitude * (1 + 1e-12) + 1e-15
    assert np.max(np.abs(expected_reward(mdp, out) - expected_reward(mdp, r))) <= 1e-12 * (1 + magnitude)
    for k in range(5):
        pi = random_policy(mdp, seed + k)
        assert policy_return(mdp, out, pi) == pytest.approx(policy_return(mdp, r, pi), abs=1e-9)


def test_redistribution_with_zero_magnitude_is_identity():
    mdp = random_mdp(3, 2, 0.9, 0.0, 0)
    r = random_reward(mdp, 1.0, 0)
    assert np.array_equal(apply_sprime_redistribution(r, mdp, 0.0, 1), r)


def test_trajectory_returns_shift_by_start_potential():
    mdp = random_mdp(4, 2, 0.9, 0.0, 6)
    r = random_reward(mdp, 1.0, 7)
    phi = np.random.default_rng(8).normal(size=4)
    shaped = apply_potential_shaping(r, phi, mdp.gamma)
    pi = random_policy(mdp, 9)
    for seed in range(5):
        path = rollout(mdp, pi, 200, seed)
        gap = discounted_return(shaped, path, mdp.gamma) - discounted_return(r, path, mdp.gamma)
        assert gap == pytest.approx(-phi[path[0][0]], abs=1e-6)


@given(mdps(sizes=[(2, 2), (3, 2), (3, 3)]), seeds)
def test_group_structure(mdp, seed):
    rng = np.random.default_rng(seed)
    r = random_reward(mdp, 1.0, seed)
    phi1, phi2 = rng.normal(size=(2, mdp.n_states))
    composed = apply_potential_shaping(apply_potential_shaping(r, phi1, mdp.gamma), phi2, mdp.gamma)
    assert np.allclose(composed, apply_potential_shaping(r, phi1 + phi2, mdp.gamma), atol=1e-12)
    z1 = apply_sprime_redistribution(r, mdp, 1.0, seed) - r
    z2 = apply_sprime_redistribution(r, mdp, 2.0, seed + 1) - r
    assert decompose_difference(r, r + z1 + z2, mdp).in_ps_sr
    assert np.allclose((r + z1) - z1, r, atol=1e-12)
    c1, c2 = rng.uniform(0.2, 5.0, size=2)
    assert np.allclose(apply_linear_scaling(apply_linear_scaling(r, c1), c2), apply_linear_scaling(r, c1 * c2))
    assert np.allclose(apply_linear_scaling(apply_linear_scaling(r, c1), 1 / c1), r, atol=1e-12)


@given(mdps(), seeds)
def test_shaping_and_scaling_commute(mdp, seed):
    rng = np.random.default_rng(seed)
    r = random_reward(mdp, 1.0, seed)
    phi = rng.normal(size=mdp.n_states)
    c = float(rng.uniform(0.1, 10.0))
    scale_after_shaping = apply_linear_scaling(apply_potential_shaping(r, phi, mdp.gamma), c)
    shaping_after_scale = apply_potential_shaping(apply_linear_scaling(r, c), c * phi, mdp.gamma)
    assert np.max(np.abs(scale_after_shaping - shaping_after_scale)) <= 1e-10
    shape_after_scale = apply_potential_shaping(apply_linear_scaling(r, c), phi, mdp.gamma)
    scale_after_shape = apply_linear_scaling(apply_potential_shaping(r, phi / c, mdp.gamma), c)
    assert np.max(np.abs(shape_after_scale - scale_after_shape)) <= 1e-10


# --- optimality-preserving transformations --------------------------------------


@given(mdps(), seeds)
def test_optimality_preserving_keeps_optimal_sets(mdp, seed):
    rng = np.random.default_rng(seed)
    r = random_reward(mdp, 1.0, seed)
    r2 = apply_optimality_preserving(r, mdp, rng.normal(scale=3, size=mdp.n_states), seed)
    assert max_supportive_optimal(mdp, r2) == max_supportive_optimal(mdp, r)


def test_optimality_preserving_with_optimal_values_reproduces_q():
    mdp = random_mdp(4, 3, 0.9, 0.0, 12)
    r = random_reward(mdp, 1.0, 13)
    values = value_iteration(mdp, r)
    r2 = apply_optimality_preserving(r, mdp, values.v_star, 0, slack=-values.a_star)
    assert np.max(np.abs(value_iteration(mdp, r2).q_star - values.q_star)) <= 1e-9


def test_optimality_preserving_can_change_the_order():
    found = False
    for seed in range(50):
        mdp = random_mdp(2, 3, 0.9, 0.0, seed)
        r = random_reward(mdp, 1.0, seed)
        psi = np.random.default_rng(seed).normal(size=2)
        r2 = apply_optimality_preserving(r, mdp, psi, seed)
        if policy_order_oracle(mdp, r, r2) is OrderVerdict.DIFFERENT_ORDER:
            found = True
            break
    assert found


def test_optimality_preserving_rejects_bad_slack():
    mdp = random_mdp(2, 2, 0.9, 0.0, 0)
    r = random_reward(mdp, 1.0, 0)
    with pytest.raises(ValueError):
        apply_optimality_preserving(r, mdp, np.zeros(2), 0, slack=np.zeros((2, 2)))


# --- bases and decomposition ---------------------------------------------------


def test_single_state_bases():
    mdp = Mdp(np.ones((1, 1, 1)), np.ones(1), 0.6)
    shaping = shaping_basis(mdp)
    assert shaping.kind is SubspaceKind.SHAPING
    assert shaping.vectors.tolist() == [[0.6 - 1.0]]
    assert len(redistribution_basis(mdp)) == 0


@given(mdps())
def test_basis_dimensions_and_independence(mdp):
    n, k = mdp.n_states, mdp.n_actions
    shaping, redistribution, combined = shaping_basis(mdp), redistribution_basis(mdp), combined_basis(mdp)
    assert len(shaping) == shaping.rank() == n
    assert len(redistribution) == redistribution.rank() == n * k * (n - 1)
    assert combined.rank() == n + n * k * (n - 1)
    if len(redistribution):
        # Every redistribution vector has zero expectation under every transition row.
        blocks = redistribution.vectors.reshape(-1, n * k, n)
        rows = mdp.transition.reshape(n * k, n)
        assert np.max(np.abs(np.einsum("ibt,bt->ib", blocks, rows))) <= 1e-12


def test_two_by_two_redistribution_dimension():
    assert len(redistribution_basis(random_mdp(2, 2, 0.9, 0.0, 0))) == 4


@given(mdps(), seeds)
def test_decompose_members(mdp, seed):
    rng = np.random.default_rng(seed)
    r = random_reward(mdp, 1.0, seed)
    shaped = apply_potential_shaping(r, rng.normal(size=mdp.n_states), mdp.gamma)
    result = decompose_difference(r, shaped, mdp)
    assert result.in_ps_sr and result.residual_norm <= 1e-10
    assert np.max(np.abs(result.reconstruct(mdp) - (shaped - r))) <= 1e-9
    moved = apply_sprime_redistribution(shaped, mdp, 1.5, seed)
    both = decompose_difference(r, moved, mdp)
    assert both.in_ps_sr
    assert np.max(np.abs(both.reconstruct(mdp) - (moved - r))) <= 1e-9


@given(mdps(sizes=[(2, 2), (3, 2), (3, 3), (4, 3)]), seeds)
def test_decompose_rejects_orthogonal_directions(mdp, seed):
    r = random_reward(mdp, 1.0, seed)
    direction = projection_off_trivial(mdp, random_reward(mdp, 1.0, seed + 1))
    result = decompose_difference(r, r + direction, mdp)
    assert not result.in_ps_sr
    assert result.residual_norm > 0


def test_scaled_decomposition_recovers_scale():
    mdp = random_mdp(3, 3, 0.9, 0.0, 5)
    r = random_reward(mdp, 1.0, 6)
    r2 = apply_sprime_redistribution(apply_potential_shaping(2.5 * r, np.arange(3.0), mdp.gamma), mdp, 1.0, 7)
    result = decompose_scaled_difference(r, r2, mdp)
    assert result.scale == pytest.approx(2.5, abs=1e-9)
    assert result.residual_norm <= 1e-9


def test_same_optimal_policies_examples(one_state_two_actions, arm_reward):
    mdp = random_mdp(3, 2, 0.9, 0.0, 2)
    r = random_reward(mdp, 1.0, 2)
    assert same_optimal_policies(mdp, r, r + 5)
    assert same_optimal_policies(mdp, r, 3 * r)
    assert not same_optimal_policies(one_state_two_actions, arm_reward, -arm_reward)


# --- constructions across environments -----------------------------------------


def test_transfer_tau_two_successor_example():
    tau1 = np.array([[[0.5, 0.5]]])
    tau2 = np.array([[[1.0, 0.0]]])
    out = transfer_construction_tau(np.zeros((1, 1, 2)), tau1, tau2, np.array([[1.0]]))
    assert out[0, 0] == pytest.approx([1.0, -1.0], abs=1e-12)


def test_transfer_tau_leaves_untargeted_rows_alone():
    mdp1 = random_mdp(3, 2, 0.9, 0.0, 1)
    tau2 = mdp1.transition.copy()
    tau2[0, 1] = random_mdp(3, 2, 0.9, 0.0, 2).transition[0, 1]
    r = random_reward(mdp1, 1.0, 3)
    target = adversarial_tau_target(r, mdp1.transition, tau2)
    assert np.isfinite(target).sum() == 1
    out = transfer_construction_tau(r, mdp1.transition, tau2, target)
    untouched = np.ones((3, 2), dtype=bool)
    untouched[0, 1] = False
    assert np.array_equal(out[untouched], r[untouched])
    with pytest.raises(ValueError):
        transfer_construction_tau(r, mdp1.transition, tau2, np.zeros((3, 2)))


@given(seeds)
def test_transfer_tau_invisible_under_first_dynamics(seed):
    mdp1 = random_mdp(3, 2, 0.9, 0.0, seed)
    mdp2 = mdp1.with_transition(random_mdp(3, 2, 0.9, 0.0, seed + 1).transition)
    r1 = random_reward(mdp1, 1.0, seed)
    target = adversarial_tau_target(r1, mdp1.transition, mdp2.transition)
    r2 = transfer_construction_tau(r1, mdp1.transition, mdp2.transition, target)
    assert np.max(np.abs(expected_reward(mdp1, r2) - expected_reward(mdp1, r1))) <= 1e-10
    assert np.max(np.abs(expected_reward(mdp2, r2) - target)) <= 1e-10
    assert np.max(np.abs(boltzmann_policy(mdp1, r1, 1.0) - boltzmann_policy(mdp1, r2, 1.0))) <= 1e-8
    assert not same_optimal_policies(mdp2, r1, r2)


@given(mdps(sizes=[(2, 2), (3, 2), (3, 3)]), seeds, st.sampled_from([0.3, 0.9]))
def test_gamma_construction_is_trivial_under_its_own_discount(mdp, seed, gamma1):
    state = seed % mdp.n_states
    x = float(np.random.default_rng(seed).normal()) + 2.0
    r = transfer_construction_gamma(gamma1, state, x, mdp)
    j_max, j_min = j_range(mdp.with_gamma(gamma1), r)
    assert j_max - j_min <= 1e-9


def test_gamma_construction_rejects_zero_weight():
    with pytest.raises(ValueError):
        transfer_construction_gamma(0.9, 0, 0.0, random_mdp(2, 2, 0.9, 0.0, 0))


# --- serialisable specs -----------------------------------------------------------


def test_spec_round_trip_and_application():
    mdp = random_mdp(3, 2, 0.9, 0.0, 0)
    r = random_reward(mdp, 1.0, 1)
    raw = {
        "kind": "potential_shaping",
        "params": {"phi": [1.0, -2.0, 0.5]},
        "then": [{"kind": "linear_scaling", "params": {"c": 2.0}}, {"kind": "sprime_redistribution", "params": {"magnitude": 1.0}}],
    }
    spec = TransformSpec.from_dict(raw)
    assert TransformSpec.from_dict(spec.to_dict()) == spec
    out = apply_transform_spec(spec, r, mdp, seed=4)
    assert np.array_equal(out, apply_transform_spec(spec, r, mdp, seed=4))
    assert decompose_difference(2.0 * r, out, mdp).in_ps_sr
    assert np.array_equal(apply_transform_spec(TransformSpec("identity"), r, mdp), r)


def test_spec_rejects_bad_input():
    for bad in [
        {"kind": "linear_scaling", "params": {"c": 0}},
        {"kind": "linear_scaling", "params": {}},
        {"kind": "potential_shaping", "params": {"phi": [0], "extra": 1}},
        {"kind": "unknown"},
        {"kind": "sprime_redistribution", "params": {"magnitude": 1, "z": [0]}},
        {"params": {}},
    ]:
        with pytest.raises(ValueError):
            TransformSpec.from_dict(bad)
    mdp = random_mdp(2, 2, 0.9, 0.0, 0)
    spec = TransformSpec.from_dict({"kind": "sprime_redistribution", "params": {"z": [1.0] * 8}})
    with pytest.raises(ValueError):
        apply_transform_spec(spec, np.zeros(mdp.reward_shape), mdp)
