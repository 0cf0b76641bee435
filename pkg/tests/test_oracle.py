import math

import numpy as np
import pytest

from dualsafe import builtin_cmdp_path
from dualsafe.agents import SafetyBudget, safety_threshold
from dualsafe.envs import TabularCmdp
from dualsafe.oracle import (
    CmdpFormatError,
    constrained_optimum,
    load_cmdp,
    policy_values,
    safety_threshold_by_sum,
    tabular_primal_dual,
)


def _single_loop(reward=1.0, cost=0.0):
    return TabularCmdp(
        transitions=np.ones((1, 1, 1)),
        rewards=np.array([[reward]]),
        costs=np.array([[cost]]),
        start=np.array([1.0]),
    )


def _two_state_chain():
    # s0 -> s1 -> s1 under the only action; rewards (0, 1)
    return TabularCmdp(
        transitions=np.array([[[0.0, 1.0]], [[0.0, 1.0]]]),
        rewards=np.array([[0.0], [1.0]]),
        costs=np.zeros((2, 1)),
        start=np.array([1.0, 0.0]),
    )


class TestPolicyValues:
    def test_geometric_series(self):
        v = policy_values(_single_loop(), [0], "reward", discount=0.9, tol=1e-10)
        assert v[0] == pytest.approx(10.0, abs=1e-9)

    def test_myopic_collapse(self):
        v = policy_values(_single_loop(reward=3.5), [0], "reward", discount=0.0)
        assert v[0] == 3.5

    def test_hand_solved_chain(self):
        v = policy_values(_two_state_chain(), [0, 0], "reward", discount=0.5)
        assert v[1] == pytest.approx(2.0, abs=1e-12)
        assert v[0] == pytest.approx(1.0, abs=1e-12)

    def test_finite_horizon_backward_induction(self):
        v = policy_values(_single_loop(), [0], "reward", discount=1.0, horizon=7)
        assert v[0] == 7.0

    def test_indicator_signal(self):
        v = policy_values(_single_loop(cost=0.3), [0], "indicator", discount=0.5)
        assert v[0] == 0.0
        v = policy_values(_single_loop(cost=0.0), [0], "indicator", discount=0.5)
        assert v[0] == pytest.approx(2.0, abs=1e-12)

    def test_rejects_undiscounted_infinite_horizon(self):
        with pytest.raises(ValueError):
            policy_values(_single_loop(), [0], "reward", discount=1.0)

    def test_fixed_point_residual(self):
        cmdp = load_cmdp(builtin_cmdp_path("detour"))
        pol = [1, 0, 0, 0, 0]
        v = policy_values(cmdp, pol, "reward", discount=0.9, tol=1e-10)
        idx = np.arange(cmdp.n_states)
        p_pi = cmdp.transitions[idx, pol]
        r_pi = cmdp.rewards[idx, pol]
        assert np.max(np.abs(r_pi + 0.9 * p_pi @ v - v)) <= 1e-10


class TestThresholdFiniteSum:
    def test_two_step_hand_computation(self):
        assert safety_threshold_by_sum(0.05, 0.5, 2) == pytest.approx(1.1875, abs=1e-12)

    def test_zero_discount(self):
        for t in (1, 2, 50, 500):
            assert safety_threshold_by_sum(0.05, 0.0, t) == pytest.approx(0.95, abs=1e-15)

    def test_matches_closed_form_on_grid(self):
        for delta in (0.0, 0.05, 0.5, 1.0):
            for gamma_bar in (0.0, 0.5, 0.9, 0.99):
                for t in (1, 2, 50, 500, 1000):
                    closed = safety_threshold(delta, gamma_bar, t)
                    summed = safety_threshold_by_sum(delta, gamma_bar, t)
                    assert abs(closed - summed) < 1e-9


class TestConstrainedOptimum:
    def test_no_cost_means_constraint_inactive(self):
        cmdp = load_cmdp(builtin_cmdp_path("no_risk"))
        budget = SafetyBudget.create(0.05, 0.6, math.inf)
        sol = constrained_optimum(cmdp, budget, discount=0.9)
        assert sol.feasible
        assert np.array_equal(sol.policy, sol.unconstrained_policy)
        assert sol.v_reward == sol.unconstrained_v_reward == pytest.approx(5.5, abs=1e-9)

    def test_risky_action_excluded(self):
        cmdp = load_cmdp(builtin_cmdp_path("risky_shortcut"))
        budget = SafetyBudget.create(0.05, 0.6, math.inf)
        sol = constrained_optimum(cmdp, budget, discount=0.9)
        assert sol.feasible
        assert np.array_equal(sol.policy, [0, 0])
        assert sol.v_reward == pytest.approx(5.0, abs=1e-9)
        assert np.array_equal(sol.unconstrained_policy, [1, 1])
        assert sol.unconstrained_v_reward == pytest.approx(10.0, abs=1e-9)

    def test_delta_one_makes_constraint_vacuous(self):
        cmdp = load_cmdp(builtin_cmdp_path("risky_shortcut"))
        budget = SafetyBudget.create(1.0, 0.6, math.inf)
        sol = constrained_optimum(cmdp, budget, discount=0.9)
        assert budget.threshold == 0.0
        assert sol.v_reward == sol.unconstrained_v_reward

    def test_no_dominating_policy_outside_solution(self):
        import itertools

        cmdp = load_cmdp(builtin_cmdp_path("detour"))
        budget = SafetyBudget.create(0.05, 0.6, math.inf)
        sol = constrained_optimum(cmdp, budget, discount=0.9)
        for assignment in itertools.product(range(cmdp.n_actions), repeat=cmdp.n_states):
            pol = np.array(assignment)
            v_i = float(cmdp.start @ policy_values(cmdp, pol, "indicator", 0.6))
            v_r = float(cmdp.start @ policy_values(cmdp, pol, "reward", 0.9))
            if v_i >= budget.threshold - 1e-12:
                assert v_r <= sol.v_reward + 1e-12

    def test_infeasible_flagged(self):
        cmdp = load_cmdp(builtin_cmdp_path("infeasible"))
        budget = SafetyBudget.create(0.05, 0.6, math.inf)
        sol = constrained_optimum(cmdp, budget, discount=0.9)
        assert not sol.feasible

    def test_enumeration_bound(self):
        cmdp = TabularCmdp(
            transitions=np.full((12, 4, 12), 1.0 / 12),
            rewards=np.zeros((12, 4)),
            costs=np.zeros((12, 4)),
            start=np.full(12, 1.0 / 12),
        )
        budget = SafetyBudget.create(0.05, 0.6, math.inf)
        with pytest.raises(ValueError):
            constrained_optimum(cmdp, budget)  # 4^12 > 1e6


class TestTabularPrimalDual:
    def test_constraint_inactive_lambda_stays_zero(self):
        cmdp = load_cmdp(builtin_cmdp_path("no_risk"))
        budget = SafetyBudget.create(0.05, 0.6, math.inf)
        result = tabular_primal_dual(cmdp, budget, discount=0.9)
        assert np.all(result.lambda_trace == 0.0)
        oracle = constrained_optimum(cmdp, budget, discount=0.9)
        assert np.array_equal(result.policy, oracle.unconstrained_policy)
        assert result.v_reward == oracle.unconstrained_v_reward

    def test_recovers_constrained_optimum(self):
        cmdp = load_cmdp(builtin_cmdp_path("risky_shortcut"))
        budget = SafetyBudget.create(0.05, 0.6, math.inf)
        oracle = constrained_optimum(cmdp, budget, discount=0.9)
        result = tabular_primal_dual(cmdp, budget, discount=0.9)
        assert result.feasible
        assert result.v_indicator >= budget.threshold - 1e-6
        assert abs(result.v_reward - oracle.v_reward) <= 0.02 * abs(oracle.v_reward)

    def test_infeasible_threshold_grows_lambda_monotonically(self):
        cmdp = load_cmdp(builtin_cmdp_path("infeasible"))
        budget = SafetyBudget.create(0.05, 0.6, math.inf)
        result = tabular_primal_dual(cmdp, budget, discount=0.9, iterations=500)
        assert not result.feasible
        diffs = np.diff(result.lambda_trace)
        assert np.all(diffs >= 0)
        assert result.lambda_trace[-1] > result.lambda_trace[0]


class TestCmdpFormat:
    def test_loads_shipped_instances(self):
        for name in ("no_risk", "risky_shortcut", "detour", "infeasible"):
            cmdp = load_cmdp(builtin_cmdp_path(name))
            assert cmdp.n_states >= 1

    def test_rejects_missing_start(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("1 1 inf\nP 0 0: 1\nR 0 0: 0\nC 0 0: 0\n")
        with pytest.raises(CmdpFormatError):
            load_cmdp(p)

    def test_rejects_bad_distribution(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("1 1 inf\nP 0 0: 0.7\nR 0 0: 0\nC 0 0: 0\nstart: 1\n")
        with pytest.raises(CmdpFormatError):
            load_cmdp(p)

    def test_rejects_missing_transition_row(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("2 1 inf\nP 0 0: 0 1\nstart: 1 0\n")
        with pytest.raises(CmdpFormatError):
            load_cmdp(p)

    def test_comments_and_defaults(self, tmp_path):
        p = tmp_path / "ok.txt"
        p.write_text(
            "# tiny instance\n1 1 inf\nP 0 0: 1  # self loop\nstart: 1\n"
        )
        cmdp = load_cmdp(p)
        assert cmdp.rewards[0, 0] == 0.0
        assert cmdp.costs[0, 0] == 0.0
