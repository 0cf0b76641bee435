"""Acceptance suite: one printed PASS/FAIL line per criterion.

Criteria 1-3 and 7 are exact-math checks and finish in seconds. Criteria
4-6 train real agents on one core (roughly 20-25 minutes total); run

    pytest -s tests/test_acceptance.py

to watch progress lines appear. Every tolerance is pinned here, not
calibrated at runtime.
"""
import itertools
import math
import os
import time

import numpy as np
import pytest

import dualsafe as ds
from dualsafe.trainer import normalized_policy

CORRIDOR_STEPS = {0: 100_000, 1: 60_000, 2: 60_000}  # seed -> steps (<= 3e5)
PUSHER_STEPS = 50_000  # <= 1e5
SEEDS = (0, 1, 2)


def _report(criterion: str, ok: bool, detail: str) -> bool:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {criterion}: {status} — {detail}", flush=True)
    return ok


def _corridor_config(tmp, seed):
    return ds.TrainConfig(
        env_name="corridor",
        baseline_mode="learnable",
        total_steps=CORRIDOR_STEPS[seed],
        warmup_steps=1_000,
        batch_size=128,
        hidden_sizes=(32, 32),
        delta=0.05,
        gamma_bar=0.6,
        horizon=500,
        eval_every=5_000,
        eval_episodes=5,
        seed=seed,
        metrics_path=os.path.join(tmp, f"corridor_{seed}.csv"),
        checkpoint_path=os.path.join(tmp, f"corridor_{seed}.ckpt"),
    )


def _pusher_config(tmp, seed):
    return ds.TrainConfig(
        env_name="pusher",
        baseline_mode="scripted:straight_line_push",
        total_steps=PUSHER_STEPS,
        warmup_steps=1_000,
        batch_size=128,
        hidden_sizes=(32, 32),
        delta=0.05,
        gamma_bar=0.6,
        horizon=50,
        eval_every=5_000,
        eval_episodes=10,
        seed=seed,
        metrics_path=os.path.join(tmp, f"pusher_{seed}.csv"),
        checkpoint_path=os.path.join(tmp, f"pusher_{seed}.ckpt"),
    )


@pytest.fixture(scope="session")
def corridor_runs(tmp_path_factory):
    tmp = str(tmp_path_factory.mktemp("acceptance_corridor"))
    runs = []
    for seed in SEEDS:
        config = _corridor_config(tmp, seed)
        t0 = time.time()
        runs.append(ds.train(config))
        print(f"[corridor seed {seed}: {config.total_steps} steps in "
              f"{time.time() - t0:.0f}s]", flush=True)
    return runs


@pytest.fixture(scope="session")
def pusher_runs(tmp_path_factory):
    tmp = str(tmp_path_factory.mktemp("acceptance_pusher"))
    runs = []
    for seed in SEEDS:
        config = _pusher_config(tmp, seed)
        t0 = time.time()
        runs.append(ds.train(config))
        print(f"[pusher seed {seed}: {config.total_steps} steps in "
              f"{time.time() - t0:.0f}s]", flush=True)
    return runs


def test_criterion_1_threshold_math():
    t0 = time.time()
    worst = 0.0
    for delta in (0.0, 0.05, 0.5, 1.0):
        for gamma_bar in (0.0, 0.5, 0.9, 0.99):
            for horizon in (1, 2, 50, 500, 1000):
                closed = ds.safety_threshold(delta, gamma_bar, horizon)
                summed = ds.safety_threshold_by_sum(delta, gamma_bar, horizon)
                worst = max(worst, abs(closed - summed))
            exact = (1.0 - delta) / (1.0 - gamma_bar)
            limit_ok = ds.safety_threshold(delta, gamma_bar, math.inf) == exact
            assert limit_ok
    elapsed = time.time() - t0
    ok = _report(
        "1 (threshold math)",
        worst < 1e-9,
        f"max |closed - finite sum| = {worst:.2e} over the grid, "
        f"infinite-horizon branch exact, {elapsed:.2f}s",
    )
    assert ok


def test_criterion_2_gradient_correctness():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        depth = int(rng.integers(1, 4))
        sizes = (
            int(rng.integers(1, 17)),
            *(int(rng.integers(1, 17)) for _ in range(depth)),
            int(rng.integers(1, 5)),
        )
        activation = "tanh" if i % 2 == 0 else "identity"
        net = ds.mlp_init(sizes, activation, seed=int(rng.integers(2**31)))
        x = rng.normal(size=(3, sizes[0]))
        worst = max(worst, ds.gradient_check(net, x, eps=1e-5))
    elapsed = time.time() - t0
    ok = _report(
        "2 (gradient correctness)",
        worst < 1e-4,
        f"max relative error {worst:.2e} over 100 random MLPs up to "
        f"(16,16,16,4), {elapsed:.1f}s",
    )
    assert ok


def test_criterion_3_tabular_mechanism():
    t0 = time.time()
    details = []
    ok = True
    for name in ("no_risk", "risky_shortcut", "detour"):
        cmdp = ds.load_cmdp(ds.builtin_cmdp_path(name))
        budget = ds.SafetyBudget.create(0.05, 0.6, cmdp.horizon)
        oracle = ds.constrained_optimum(cmdp, budget, discount=0.9)
        solved = ds.tabular_primal_dual(cmdp, budget, discount=0.9)
        feasible = solved.v_indicator >= budget.threshold - 1e-6
        gap = abs(solved.v_reward - oracle.v_reward) / abs(oracle.v_reward)
        ok &= feasible and gap <= 0.02
        details.append(f"{name}: gap {gap:.4%}")
        if name == "no_risk":
            exact = solved.v_reward == oracle.unconstrained_v_reward
            lam_zero = bool(np.all(solved.lambda_trace == 0.0))
            ok &= exact and lam_zero
            details.append(f"no_risk exact={exact} lambda==0 throughout={lam_zero}")
    elapsed = time.time() - t0
    assert _report("3 (tabular vs oracle)", ok, "; ".join(details) + f", {elapsed:.1f}s")


def _final_row(run):
    return run.rows[-1]


def _random_policy_return(seed):
    env = ds.CorridorEnv(horizon=500)
    rng = np.random.default_rng(seed + 10_000)
    report = ds.evaluate(lambda obs: rng.uniform(-1, 1, 2), env, episodes=5, seed=seed)
    return report.mean_return


def test_criterion_4_cotrained_corridor(corridor_runs):
    horizon = 500
    viol_b = np.mean([_final_row(r)["episode_cost_B"] / horizon for r in corridor_runs])
    viol_s = np.mean([_final_row(r)["violation_rate_S"] for r in corridor_runs])
    ret_b = np.mean([_final_row(r)["episode_return_B"] for r in corridor_runs])
    ret_s = np.mean([_final_row(r)["episode_return_S"] for r in corridor_runs])
    ret_random = np.mean([_random_policy_return(seed) for seed in SEEDS])
    ok_a = viol_b > 0.5
    ok_b = viol_s <= 0.05
    ok_c = ret_s >= 0.25 * ret_b and ret_s > 5 * ret_random
    ok = ok_a and ok_b and ok_c
    assert _report(
        "4 (co-trained corridor)",
        ok,
        f"baseline violation {viol_b:.3f} (> 0.5: {ok_a}); "
        f"safe violation {viol_s:.4f} (<= 0.05: {ok_b}); "
        f"returns safe {ret_s:.0f} vs baseline {ret_b:.0f} vs random "
        f"{ret_random:.1f} (>=25% and >5x: {ok_c}); 3 seeds",
    )


def test_criterion_5_fixed_baseline_pusher(pusher_runs, tmp_path):
    succ_s = np.mean([_final_row(r)["success_rate"] for r in pusher_runs])
    viol_s = np.mean([_final_row(r)["violation_rate_S"] for r in pusher_runs])
    env = ds.make_env(pusher_runs[0].config)  # same layouts as the training runs
    controller = normalized_policy(
        ds.scripted_controller("straight_line_push", env), env.action_scale
    )
    baseline_report = ds.evaluate(controller, env, episodes=20, seed=0)
    ok_scripted_untouched = all(r.baseline_updates == 0 for r in pusher_runs)

    # frozen-checkpoint variant: baseline parameters must round-trip untouched
    donor = ds.make_baseline_agent(10, 2, hidden_sizes=(32, 32), seed=77)
    donor_path = str(tmp_path / "pusher_donor.ckpt")
    ds.save_networks(donor_path, {"baseline_actor": donor.actor})
    config = _pusher_config(str(tmp_path), 0)
    config.baseline_mode = f"checkpoint:{donor_path}"
    config.total_steps = 3_000
    config.metrics_path = str(tmp_path / "fixed.csv")
    config.checkpoint_path = str(tmp_path / "fixed.ckpt")
    result = ds.train(config)
    final = ds.load_networks(config.checkpoint_path)[0]["baseline_actor"]
    bit_identical = all(
        a.tobytes() == b.tobytes()
        for a, b in zip(final.param_arrays(), donor.actor.param_arrays())
    )
    ok = (
        succ_s >= 0.5
        and viol_s <= 0.05
        and baseline_report.violation_rate >= 0.25
        and ok_scripted_untouched
        and result.baseline_updates == 0
        and bit_identical
    )
    assert _report(
        "5 (fixed-baseline pusher)",
        ok,
        f"safe success {succ_s:.2f} (>= 0.5), safe violation {viol_s:.4f} "
        f"(<= 0.05), scripted baseline violation "
        f"{baseline_report.violation_rate:.3f} (>= 0.25), baseline updates 0, "
        f"frozen baseline bit-identical: {bit_identical}; 3 seeds",
    )


def test_criterion_6_structural_invariants(corridor_runs, tmp_path):
    big = corridor_runs[0]  # seed 0, 1e5 steps
    assert big.steps == 100_000
    lams = [row["lambda"] for row in big.rows]
    lam_ok = lams[0] == 0.0 and all(v >= 0.0 for v in lams)
    n = big.coin_flips
    sigma = math.sqrt(n * 0.25)
    coin_ok = abs(big.coin_heads - n / 2) <= 4 * sigma
    push_ok = big.pushes == big.steps

    # byte-identical metrics for identical seeds, demonstrated on a short run
    # of the same pipeline (the 1e5-step run would double the suite's cost)
    config = _corridor_config(str(tmp_path), 1)
    config.total_steps = 2_000
    config.eval_every = 500
    config.eval_episodes = 1
    config.metrics_path = str(tmp_path / "dup.csv")
    config.checkpoint_path = str(tmp_path / "dup.ckpt")
    ds.train(config)
    first = open(config.metrics_path, "rb").read()
    ds.train(config)
    second = open(config.metrics_path, "rb").read()
    bytes_ok = first == second

    ok = lam_ok and coin_ok and push_ok and bytes_ok
    assert _report(
        "6 (structural invariants)",
        ok,
        f"lambda starts 0 and stays >= 0: {lam_ok}; coin flips "
        f"{big.coin_heads}/{n} within 4 sigma of half: {coin_ok}; one push per "
        f"step: {push_ok}; identical seeds give byte-identical metrics: "
        f"{bytes_ok} (fixed-baseline zero-update invariant covered in "
        f"criterion 5)",
    )


def test_criterion_7_unit_arithmetic():
    checks = [
        ("critic_target bootstrap", ds.critic_target(1.0, 0.99, 10.0, 12.0, False), 10.9),
        ("critic_target zero", ds.critic_target(0.0, 0.99, 0.0, 0.0, False), 0.0),
        ("critic_target terminal", ds.critic_target(1.0, 0.6, 2.0, 1.5, True), 1.0),
        ("lambda_update clamp", ds.lambda_update(0.0, 9.5, 10.0, 0.001), 0.0),
        ("lambda_update deficit", ds.lambda_update(0.5, 9.5, 5.0, 0.001), 0.5045),
        ("lambda_update from zero", ds.lambda_update(0.0, 1.1875, 0.0, 0.001), 0.0011875),
    ]
    a = ds.mlp_init((1, 2), "identity", seed=0)
    a.weights[0][:] = 0.0
    a.biases[0][:] = [1.0, 0.0]
    b = ds.mlp_init((1, 2), "identity", seed=0)
    b.weights[0][:] = 0.0
    b.biases[0][:] = [0.0, 1.0]
    checks.append(("bc_distance identical", ds.bc_distance(a, a, np.zeros((3, 1))), 0.0))
    checks.append(("bc_distance orthogonal", ds.bc_distance(a, b, np.zeros((1, 1))), 2.0))
    c = ds.mlp_init((1, 2), "identity", seed=0)
    c.weights[0][:] = [[1.0], [-1.0]]
    c.biases[0][:] = 0.0
    d = ds.mlp_init((1, 2), "identity", seed=0)
    d.weights[0][:] = 0.0
    d.biases[0][:] = 0.0
    checks.append(
        ("bc_distance batch mean", ds.bc_distance(c, d, np.array([[1.0], [0.0]])), 1.0)
    )
    t1 = ds.mlp_init((1, 1), seed=0)
    o1 = ds.mlp_init((1, 1), seed=0)
    t1.weights[0][:] = 0.0
    o1.weights[0][:] = 1.0
    ds.polyak_update(t1, o1, 1.0)
    checks.append(("polyak tau=1", float(t1.weights[0][0, 0]), 1.0))
    t1.weights[0][:] = 0.5
    ds.polyak_update(t1, o1, 0.0)
    checks.append(("polyak tau=0", float(t1.weights[0][0, 0]), 0.5))
    t1.weights[0][:] = 0.0
    ds.polyak_update(t1, o1, 0.005)
    checks.append(("polyak tau=0.005", float(t1.weights[0][0, 0]), 0.005))

    worst = max(abs(got - want) for _, got, want in checks)
    ok = worst <= 1e-12
    assert _report(
        "7 (unit arithmetic)",
        ok,
        f"{len(checks)} spec examples reproduced, max abs error {worst:.2e}",
    )
