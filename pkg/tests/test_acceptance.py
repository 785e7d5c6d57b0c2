"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that the terminal summary prints after
the run, then asserts it.  Instances are random MDPs with at most 6 states
and 3 actions, with 100 seeds unless noted.
"""

import json

import numpy as np

from conftest import ACCEPTANCE_RESULTS, SIZES
from oracles import brute_force_values
from reward_geometry.behaviour import BehaviouralModelConfig, boltzmann_policy, mce_policy, max_supportive_optimal
from reward_geometry.cli import main
from reward_geometry.lab import (
    experiment_invariance,
    experiment_param_misspec,
    experiment_perturbation,
    experiment_transfer_gamma,
    experiment_transfer_tau,
    gridworld_comparison,
    gridworld_mdp,
    gridworld_rewards,
    three_state_chain,
    three_state_reward,
)
from reward_geometry.mdp import (
    Mdp,
    load_mdp,
    load_reward,
    random_mdp,
    random_policy,
    random_reward,
    reward_flat,
    save_mdp,
    save_reward,
)
from reward_geometry.solvers import (
    OrderVerdict,
    occupancy_measure,
    policy_evaluation,
    policy_order_oracle,
    policy_return,
    soft_value_iteration,
    value_iteration,
)
from reward_geometry.starc import canon_minimal_l2, nas_epsilon_bound_check, nas_radius, starc_distance
from reward_geometry.transforms import (
    TransformSpec,
    apply_linear_scaling,
    apply_potential_shaping,
    apply_transform_spec,
    decompose_scaled_difference,
    random_redistribution,
    same_optimal_policies,
)

SEEDS = range(100)


def instance(seed, sizes=SIZES):
    """Deterministic random MDP for ``seed``; size and discount cycle with the seed."""
    n_states, n_actions = sizes[seed % len(sizes)]
    gamma = (0.5, 0.9)[seed % 2]
    sparsity = (0.0, 0.3)[(seed // 2) % 2]
    return random_mdp(n_states, n_actions, gamma, sparsity, 10_000 + seed)


CHOICE_SIZES = [size for size in SIZES if size[1] > 1]


def record(number, passed, detail):
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
    assert passed, f"criterion {number}: {detail}"


def test_criterion_01_solver_matches_brute_force():
    worst = 0.0
    for seed in SEEDS:
        mdp = instance(seed)
        r = random_reward(mdp, 1.0, seed)
        best, _ = brute_force_values(mdp, r)
        worst = max(worst, float(np.max(np.abs(value_iteration(mdp, r).v_star - best))))
    record(1, worst <= 1e-8, f"max |V* - brute force| = {worst:.2e} over 100 instances (tol 1e-8)")


def test_criterion_02_occupancy_identity():
    worst_return = worst_mass = 0.0
    for seed in SEEDS:
        mdp = instance(seed)
        r = random_reward(mdp, 1.0, seed)
        pi = random_policy(mdp, seed)
        eta = occupancy_measure(mdp, pi)
        worst_return = max(worst_return, abs(reward_flat(eta) @ reward_flat(r) - policy_return(mdp, r, pi)))
        worst_mass = max(worst_mass, abs(eta.sum() - 1.0 / (1.0 - mdp.gamma)))
    passed = worst_return <= 1e-9 and worst_mass <= 1e-9
    record(2, passed, f"return gap {worst_return:.2e}, mass gap {worst_mass:.2e} (tol 1e-9)")


def test_criterion_03_shaping_consequences():
    worst = 0.0
    for seed in SEEDS:
        mdp = instance(seed)
        rng = np.random.default_rng(seed)
        r = random_reward(mdp, 1.0, seed)
        phi = rng.normal(scale=2.0, size=mdp.n_states)
        shaped = apply_potential_shaping(r, phi, mdp.gamma)
        pi = random_policy(mdp, seed + 1)
        before, after = policy_evaluation(mdp, r, pi), policy_evaluation(mdp, shaped, pi)
        opt_before, opt_after = value_iteration(mdp, r), value_iteration(mdp, shaped)
        soft_before = soft_value_iteration(mdp, r, 0.7, 1e-12).q_soft
        soft_after = soft_value_iteration(mdp, shaped, 0.7, 1e-12).q_soft
        gaps = [
            after.q_pi - (before.q_pi - phi[:, None]),
            after.v_pi - (before.v_pi - phi),
            after.a_pi - before.a_pi,
            opt_after.q_star - (opt_before.q_star - phi[:, None]),
            opt_after.a_star - opt_before.a_star,
            soft_after - (soft_before - phi[:, None]),
            np.array([policy_return(mdp, shaped, pi) - (policy_return(mdp, r, pi) - mdp.initial @ phi)]),
        ]
        worst = max(worst, max(float(np.max(np.abs(g))) for g in gaps))
    record(3, worst <= 1e-8, f"max deviation of Q/V/A/J/soft-Q shifts {worst:.2e} over 100 shapings (tol 1e-8)")


def test_criterion_04_behavioural_invariance():
    mdps = [random_mdp(4, 3, (0.5, 0.9)[i % 2], (0.0, 0.3)[i // 2], 40 + i) for i in range(4)]
    metrics = {}
    for model in (BehaviouralModelConfig("boltzmann", beta=1.5), BehaviouralModelConfig("mce", alpha=0.8)):
        reports = [experiment_invariance(model, mdp, 25, 100 + i) for i, mdp in enumerate(mdps)]
        metrics[model.kind.value] = max(rep.metrics["max_policy_gap"] for rep in reports)
    optimal = [experiment_invariance(BehaviouralModelConfig("optimal"), mdp, 25, 200 + i) for i, mdp in enumerate(mdps)]
    mismatches = sum(rep.metrics["set_mismatches"] for rep in optimal)
    passed = metrics["boltzmann"] <= 1e-8 and metrics["mce"] <= 1e-8 and mismatches == 0
    detail = (f"boltzmann gap {metrics['boltzmann']:.2e}, mce gap {metrics['mce']:.2e} over 100 transforms each; "
              f"{int(mismatches)} optimal-set mismatches over 100")
    record(4, passed, detail)


def test_criterion_05_policy_ordering_both_directions():
    worst_distance = 0.0
    order_failures = 0
    for seed in SEEDS:
        mdp = instance(seed, CHOICE_SIZES)
        rng = np.random.default_rng(seed)
        r = random_reward(mdp, 1.0, seed)
        t = r + random_redistribution(mdp, float(rng.uniform(0, 3)), rng)
        t = apply_potential_shaping(t, rng.normal(scale=2, size=mdp.n_states), mdp.gamma)
        t = apply_linear_scaling(t, float(np.exp(rng.uniform(-3, 3))))
        order_failures += policy_order_oracle(mdp, r, t) is not OrderVerdict.SAME_ORDER
        worst_distance = max(worst_distance, starc_distance(r, t, mdp))

    close_pairs, worst_residual = 0, 0.0
    for seed in SEEDS:
        mdp = instance(seed, CHOICE_SIZES)
        rng = np.random.default_rng(1000 + seed)
        r = random_reward(mdp, 1.0, seed)
        t = apply_potential_shaping(r + random_redistribution(mdp, 1.0, rng), rng.normal(size=mdp.n_states), mdp.gamma)
        t = apply_linear_scaling(t, float(rng.uniform(0.2, 5.0)))
        for noise in (0.0, 1e-13, 1e-11, 1e-9, 1e-6, 1e-3):
            near = t + noise * rng.uniform(-1, 1, size=r.shape)
            if starc_distance(r, near, mdp) <= 1e-8:
                close_pairs += 1
                worst_residual = max(worst_residual, decompose_scaled_difference(r, near, mdp).residual_norm)
    passed = order_failures == 0 and worst_distance <= 1e-8 and close_pairs > 0 and worst_residual <= 1e-8
    detail = (f"(i) {order_failures} ordering failures, max distance {worst_distance:.2e}; "
              f"(ii) {close_pairs} close pairs, max residual {worst_residual:.2e}")
    record(5, passed, detail)


def test_criterion_06_pseudometric_axioms():
    worst_identity = worst_symmetry = worst_triangle = 0.0
    lowest, highest = np.inf, -np.inf
    for i in range(500):
        mdp = instance(i, CHOICE_SIZES)
        r1, r2, r3 = (random_reward(mdp, 1.0, 3 * i + k) for k in range(3))
        d12, d21 = starc_distance(r1, r2, mdp), starc_distance(r2, r1, mdp)
        d13, d23 = starc_distance(r1, r3, mdp), starc_distance(r2, r3, mdp)
        worst_identity = max(worst_identity, starc_distance(r1, r1, mdp))
        worst_symmetry = max(worst_symmetry, abs(d12 - d21))
        worst_triangle = max(worst_triangle, d13 - d12 - d23)
        lowest, highest = min(lowest, d12, d13, d23), max(highest, d12, d13, d23)
    worst_negation = max(abs(starc_distance(r, -r, mdp) - 1.0) for mdp, r in
                         ((instance(i, CHOICE_SIZES), random_reward(instance(i, CHOICE_SIZES), 1.0, i)) for i in range(50)))
    passed = (worst_identity <= 1e-9 and worst_symmetry <= 1e-9 and worst_triangle <= 1e-9
              and lowest >= 0.0 and highest <= 1.0 + 1e-12 and worst_negation <= 1e-9)
    detail = (f"d(R,R) {worst_identity:.1e}, asymmetry {worst_symmetry:.1e}, triangle excess {worst_triangle:.1e}, "
              f"range [{lowest:.3f}, {highest:.3f}], |d(R,-R)-1| {worst_negation:.1e}")
    record(6, passed, detail)


def test_criterion_07_transfer_tau():
    report = experiment_transfer_tau(17, 20, 1.0, 7, include_gridworld=False)
    m = report.metrics
    passed = m["max_starc_tau1"] <= 1e-8 and m["min_starc_tau2"] >= 0.99
    record(7, passed, f"max d under tau1 {m['max_starc_tau1']:.2e}, min d under tau2 {m['min_starc_tau2']:.6f} over 20 pairs")


def test_criterion_08_transfer_gamma():
    report = experiment_transfer_gamma(0.9, 0.5, random_mdp(4, 3, 0.9, 0.0, 23), 20, 1.0, 8)
    m = report.metrics
    passed = m["max_starc_gamma1"] <= 1e-8 and m["min_symmetric_starc_gamma2"] >= 0.99 and m["threshold_rel_error"] <= 0.01
    detail = (f"max d under gamma1 {m['max_starc_gamma1']:.2e}, min d under gamma2 {m['min_symmetric_starc_gamma2']:.6f}; "
              f"three-state flip at {m['threshold_numeric']:.6f} vs solved {m['threshold_analytic']:.6f}")
    record(8, passed, detail)


def test_criterion_09_parameter_misspecification():
    boltzmann = experiment_param_misspec("boltzmann", random_mdp(4, 3, 0.9, 0.0, 31), 100, 9)
    mce = experiment_param_misspec("mce", random_mdp(3, 2, 0.9, 0.0, 32), 100, 9)
    gap = max(rep.metrics[key] for rep in (boltzmann, mce) for key in ("max_transfer_gap", "max_fit_gap", "max_softq_gap"))
    different = boltzmann.metrics["different_order_count"] + mce.metrics["different_order_count"]
    record(9, gap <= 1e-7 and different == 0, f"max identity gap {gap:.2e} over 200 trials, {int(different)} ordering failures")


def test_criterion_10_perturbation_non_robustness():
    report = experiment_perturbation(random_mdp(3, 2, 0.9, 0.0, 0), [1e-1, 1e-2, 1e-3, 1e-4], 10)
    at_small_c = next(row["policy_gap"] for row in report.trial_metrics if row["c"] == 1e-6)
    deviation = report.metrics["max_starc_deviation"]
    record(10, at_small_c < 1e-4 and deviation <= 1e-9,
           f"policy gap at c=1e-6 {at_small_c:.2e}, max |d - 1| over the c-grid {deviation:.1e}")


def test_criterion_11_small_distance_neighbourhood():
    worst_excess, failures = -np.inf, 0
    for epsilon in (0.05, 0.1, 0.25):
        for seed in SEEDS:
            mdp = instance(seed, CHOICE_SIZES)
            rng = np.random.default_rng(seed)
            r = random_reward(mdp, 1.0, seed)
            direction = rng.normal(size=r.shape)
            length = nas_radius(epsilon) * np.linalg.norm(reward_flat(canon_minimal_l2(r, mdp)))
            perturbation = direction * (length / np.linalg.norm(reward_flat(direction)))
            failures += not nas_epsilon_bound_check(r, mdp, perturbation, epsilon)
            worst_excess = max(worst_excess, starc_distance(r, r + perturbation, mdp) - epsilon)
    record(11, failures == 0, f"{failures} failures over 300 perturbations, max d - eps = {worst_excess:.3f}")


def test_criterion_12_gridworld():
    m = gridworld_comparison()
    passed = (m["gridworld_starc_slippery"] <= 1e-9 and m["gridworld_starc_deterministic"] > 1e-3
              and m["gridworld_optimal_sets_differ"] == 1.0)
    detail = (f"slippery d {m['gridworld_starc_slippery']:.1e}, deterministic d {m['gridworld_starc_deterministic']:.6f}, "
              f"optimal sets differ: {bool(m['gridworld_optimal_sets_differ'])}")
    record(12, passed, detail)


def _cli_fixtures():
    arms = Mdp(np.ones((1, 2, 1)), np.ones(1), 0.5)
    r1, _ = gridworld_rewards()
    random = random_mdp(4, 3, 0.9, 0.2, 3)
    return {
        "self_loop": (Mdp(np.ones((1, 1, 1)), np.ones(1), 0.5), np.ones((1, 1, 1))),
        "two_arms": (arms, np.array([[[1.0], [0.0]]])),
        "random": (random, random_reward(random, 1.0, 3)),
        "three_state": (three_state_chain(0.9), three_state_reward()),
        "gridworld": (gridworld_mdp(), r1),
    }


def test_criterion_13_cli_round_trip(tmp_path):
    problems = []
    calls = 0

    def check(argv, expected_code, name):
        nonlocal calls
        calls += 1
        code = main([str(a) for a in argv])
        if code != expected_code:
            problems.append(f"{name}: {argv[0]} exited {code}, expected {expected_code}")
        return code

    for name, (mdp, r) in _cli_fixtures().items():
        folder = tmp_path / name
        folder.mkdir()
        mdp_path, r_path, neg_path = folder / "mdp.json", folder / "r.json", folder / "neg.json"
        save_mdp(mdp_path, mdp)
        save_reward(r_path, r)
        save_reward(neg_path, -r)
        mdp, r = load_mdp(mdp_path), load_reward(r_path, mdp)

        out = folder / "solve.json"
        if check(["solve", mdp_path, r_path, "--alpha", "1.0", "--out", out], 0, name) == 0:
            doc = json.loads(out.read_text())
            values = value_iteration(mdp, r)
            soft = soft_value_iteration(mdp, r, 1.0).q_soft
            if (np.array(doc["v_star"]).tobytes() != values.v_star.tobytes()
                    or np.array(doc["q_soft"]).tobytes() != soft.tobytes()):
                problems.append(f"{name}: solve output does not reload bit-identically")

        over_cap = mdp.n_actions ** mdp.n_states > 4096
        for metric, key, expected in (
            ("starc", "starc", lambda: starc_distance(r, -r, mdp)),
            ("ord", "same_order", lambda: policy_order_oracle(mdp, r, -r) is OrderVerdict.SAME_ORDER),
            ("opt", "same_optimal", lambda: same_optimal_policies(mdp, r, -r)),
        ):
            code = 3 if metric == "ord" and over_cap else 0
            out = folder / f"compare_{metric}.json"
            if check(["compare", mdp_path, r_path, neg_path, "--metric", metric, "--out", out], code, name) == 0:
                if json.loads(out.read_text())[key] != expected():
                    problems.append(f"{name}: compare {metric} does not reload to the library value")

        for model, flags in (("boltzmann", ["--beta", "1.0"]), ("mce", ["--alpha", "0.5"]), ("optimal", [])):
            out = folder / f"policy_{model}.json"
            if check(["policy", mdp_path, r_path, "--model", model, *flags, "--out", out], 0, name) == 0:
                doc = json.loads(out.read_text())
                if model == "boltzmann":
                    same = np.array(doc["probs"]).tobytes() == boltzmann_policy(mdp, r, 1.0).tobytes()
                elif model == "mce":
                    same = np.array(doc["probs"]).tobytes() == mce_policy(mdp, r, 0.5).tobytes()
                else:
                    same = tuple(map(tuple, doc["allowed"])) == max_supportive_optimal(mdp, r)
                if not same:
                    problems.append(f"{name}: policy {model} does not reload bit-identically")
        check(["policy", mdp_path, r_path, "--model", "mce", "--out", folder / "x.json"], 1, name)

        spec_doc = {"kind": "potential_shaping", "params": {"phi": list(np.linspace(-1, 1, mdp.n_states))},
                    "then": [{"kind": "sprime_redistribution", "params": {"magnitude": 0.5}},
                             {"kind": "linear_scaling", "params": {"c": 2.0}}]}
        spec = folder / "spec.json"
        spec.write_text(json.dumps(spec_doc))
        out = folder / "transformed.json"
        if check(["transform", r_path, spec, mdp_path, "--seed", "5", "--out", out], 0, name) == 0:
            expected = apply_transform_spec(TransformSpec.from_dict(spec_doc), r, mdp, 5)
            if load_reward(out, mdp).tobytes() != expected.tobytes():
                problems.append(f"{name}: transform output does not reload bit-identically")
            if mdp.n_actions > 1:
                out2 = folder / "compare_transformed.json"
                check(["compare", mdp_path, r_path, out, "--out", out2], 0, name)
                if json.loads(out2.read_text())["starc"] > 1e-9:
                    problems.append(f"{name}: transformed reward is not at distance 0")

        config = folder / "experiment.json"
        config.write_text(json.dumps({"experiment": "invariance", "seed": 7, "trials": 3,
                                      "params": {"model": "boltzmann", "beta": 1.0, "mdp_path": "mdp.json"}}))
        out = folder / "report.json"
        if check(["experiment", config, "--out", out], 0, name) == 0:
            doc = json.loads(out.read_text())
            if json.loads(json.dumps(doc)) != doc or doc["verdict"] != "pass":
                problems.append(f"{name}: experiment report does not round trip")

    broken = tmp_path / "broken.json"
    broken.write_text("{")
    check(["solve", broken, broken], 1, "malformed")
    slow = tmp_path / "slow.json"
    save_mdp(slow, Mdp(np.ones((1, 1, 1)), np.ones(1), 0.999999))
    save_reward(tmp_path / "one.json", np.ones((1, 1, 1)))
    check(["solve", slow, tmp_path / "one.json", "--tol", "1e-14", "--max-iter", "10"], 2, "slow")
    big = random_mdp(10, 4, 0.9, 0.0, 0)
    save_mdp(tmp_path / "big.json", big)
    save_reward(tmp_path / "big_r.json", random_reward(big, 1.0, 0))
    check(["compare", tmp_path / "big.json", tmp_path / "big_r.json", tmp_path / "big_r.json", "--metric", "ord"], 3, "big")
    failing = tmp_path / "fail.json"
    failing.write_text(json.dumps({"experiment": "perturbation", "params": {"delta_grid": [1e-30]}}))
    check(["experiment", failing, "--out", tmp_path / "fail_report.json"], 4, "failing verdict")
    equal = tmp_path / "equal.json"
    equal.write_text(json.dumps({"experiment": "transfer_gamma", "params": {"gamma1": 0.9, "gamma2": 0.9}}))
    check(["experiment", equal], 1, "equal discounts")

    detail = f"{calls} invocations, {len(problems)} problems" + (f": {problems[0]}" if problems else "")
    record(13, not problems, detail)

