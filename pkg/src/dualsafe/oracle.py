"""Exact ground truth at tiny scale: tabular policy evaluation, exhaustive
constrained-optimum search, the finite-sum form of the safety threshold,
and a tabular primal-dual solver with exact Q functions.

These are the instruments that validate the learning stack: the enumeration
oracle is exhaustive by construction, and the finite sum is an independent
derivation of the closed-form threshold.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .agents import SafetyBudget
from .envs import TabularCmdp

ENUMERATION_BOUND = 1_000_000


def safety_threshold_by_sum(delta: float, gamma_bar: float, horizon: int) -> float:
    """Literal finite sum (1/T) * sum_{k=0}^{T-1} (1-d)(1-g^(T-k))/(1-g).

    Independent oracle for the closed-form threshold in agents.safety_threshold.
    """
    if not 0.0 <= gamma_bar < 1.0:
        raise ValueError(f"gamma_bar must be in [0, 1), got {gamma_bar}")
    t = int(horizon)
    if t < 1 or t != horizon:
        raise ValueError(f"horizon must be a positive integer, got {horizon}")
    k = np.arange(t)
    terms = (1.0 - delta) * (1.0 - gamma_bar ** (t - k)) / (1.0 - gamma_bar)
    return float(terms.sum() / t)


def _signal_table(cmdp: TabularCmdp, signal: str) -> np.ndarray:
    if signal == "reward":
        return cmdp.rewards
    if signal == "indicator":
        return cmdp.indicator_table()
    raise ValueError(f"signal must be 'reward' or 'indicator', got {signal!r}")


def _policy_array(cmdp: TabularCmdp, policy) -> np.ndarray:
    pol = np.asarray(policy, dtype=np.int64)
    if pol.shape != (cmdp.n_states,):
        raise ValueError("policy must assign one action per state")
    if np.any(pol < 0) or np.any(pol >= cmdp.n_actions):
        raise ValueError("policy action out of range")
    return pol


def policy_values(
    cmdp: TabularCmdp,
    policy,
    signal: str = "reward",
    discount: float = 0.99,
    tol: float = 1e-10,
    horizon=None,
) -> np.ndarray:
    """Exact per-state value of a deterministic policy.

    Infinite horizon (horizon None or inf): solves the Bellman system
    directly and asserts the fixed-point residual is within tol. Finite
    horizon: backward induction over exactly that many steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    pol = _policy_array(cmdp, policy)
    table = _signal_table(cmdp, signal)
    idx = np.arange(cmdp.n_states)
    p_pi = cmdp.transitions[idx, pol]  # (S, S)
    sig_pi = table[idx, pol]  # (S,)
    if horizon is None or horizon == math.inf:
        if discount >= 1.0:
            raise ValueError("infinite-horizon evaluation needs discount < 1")
        v = np.linalg.solve(np.eye(cmdp.n_states) - discount * p_pi, sig_pi)
        residual = np.max(np.abs(sig_pi + discount * p_pi @ v - v))
        if residual > tol:
            raise ArithmeticError(f"policy evaluation residual {residual} > tol")
        return v
    t = int(horizon)
    if t < 1 or t != horizon:
        raise ValueError(f"horizon must be a positive integer or inf, got {horizon}")
    v = np.zeros(cmdp.n_states)
    for _ in range(t):
        v = sig_pi + discount * p_pi @ v
    return v


@dataclass(frozen=True)
class OracleSolution:
    """Best feasible deterministic policy plus the unconstrained optimum."""

    policy: np.ndarray
    v_reward: float
    v_indicator: float
    feasible: bool
    threshold: float
    unconstrained_policy: np.ndarray
    unconstrained_v_reward: float
    unconstrained_v_indicator: float


def constrained_optimum(
    cmdp: TabularCmdp, budget: SafetyBudget, discount: float = 0.99
) -> OracleSolution:
    """Enumerate every deterministic policy and return the max-reward one
    whose start-weighted indicator value meets the threshold.

    If no policy is feasible, returns the max-indicator policy with
    feasible=False.
    """
    n_policies = cmdp.n_actions**cmdp.n_states
    if n_policies > ENUMERATION_BOUND:
        raise ValueError(
            f"{n_policies} deterministic policies exceed the enumeration bound"
        )
    gamma_bar = budget.gamma_bar
    best = None  # (v_r, v_i, policy)
    best_unconstrained = None
    safest = None
    for assignment in itertools.product(range(cmdp.n_actions), repeat=cmdp.n_states):
        pol = np.array(assignment, dtype=np.int64)
        v_r = float(
            cmdp.start @ policy_values(cmdp, pol, "reward", discount, horizon=cmdp.horizon)
        )
        v_i = float(
            cmdp.start
            @ policy_values(cmdp, pol, "indicator", gamma_bar, horizon=cmdp.horizon)
        )
        if best_unconstrained is None or v_r > best_unconstrained[0]:
            best_unconstrained = (v_r, v_i, pol)
        if safest is None or v_i > safest[1]:
            safest = (v_r, v_i, pol)
        if v_i >= budget.threshold - 1e-12 and (best is None or v_r > best[0]):
            best = (v_r, v_i, pol)
    if best is None:
        v_r, v_i, pol = safest[0], safest[1], safest[2]
        feasible = False
    else:
        v_r, v_i, pol = best
        feasible = True
    return OracleSolution(
        policy=pol,
        v_reward=v_r,
        v_indicator=v_i,
        feasible=feasible,
        threshold=budget.threshold,
        unconstrained_policy=best_unconstrained[2],
        unconstrained_v_reward=best_unconstrained[0],
        unconstrained_v_indicator=best_unconstrained[1],
    )


@dataclass
class PrimalDualResult:
    """Outcome of the tabular primal-dual run, with the extracted greedy policy."""

    policy: np.ndarray
    v_reward: float
    v_indicator: float
    feasible: bool
    threshold: float
    lambda_trace: np.ndarray
    stochastic_policy: np.ndarray = field(repr=False)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _stochastic_eval(cmdp, pi, table, discount):
    """(V, Q) of a stochastic policy, exact via the linear Bellman system."""
    p_pi = np.einsum("sa,sax->sx", pi, cmdp.transitions)
    sig_pi = np.sum(pi * table, axis=1)
    v = np.linalg.solve(np.eye(cmdp.n_states) - discount * p_pi, sig_pi)
    q = table + discount * cmdp.transitions @ v
    return v, q


def tabular_primal_dual(
    cmdp: TabularCmdp,
    budget: SafetyBudget,
    discount: float = 0.99,
    primal_lr: float = 0.1,
    dual_lr: float = 0.02,
    iterations: int = 6000,
) -> PrimalDualResult:
    """Primal-dual constrained return maximization with exact tabular Q's.

    A softened (softmax) tabular policy ascends the Lagrangian
    V_R + lambda * V_I while lambda follows projected dual steps
    [lambda + eta * (threshold - V_I)]^+. The primal step adds the exact
    Lagrangian advantages straight to the logits (the natural-gradient form
    for softmax policies, which cannot stall in saturated corners the way
    the vanilla gradient does). The behavior-cloning anchor of the
    function-approximation stack is deliberately absent: this solver
    certifies the constraint mechanics, not imitation. The returned policy
    is the greedy extraction from the final softmax policy; failure to reach
    feasibility within the iteration budget is reported via feasible=False.
    """
    if discount >= 1.0 or budget.gamma_bar >= 1.0:
        raise ValueError("tabular primal-dual requires discounted (infinite-horizon) values")
    rewards = cmdp.rewards
    indicators = cmdp.indicator_table()
    logits = np.zeros((cmdp.n_states, cmdp.n_actions))
    lam = 0.0
    trace = np.empty(iterations)
    for it in range(iterations):
        pi = _softmax_rows(logits)
        v_r, q_r = _stochastic_eval(cmdp, pi, rewards, discount)
        v_i, q_i = _stochastic_eval(cmdp, pi, indicators, budget.gamma_bar)
        adv = (q_r - v_r[:, None]) + lam * (q_i - v_i[:, None])
        logits += primal_lr * adv
        logits -= logits.max(axis=1, keepdims=True)
        e_vi = float(cmdp.start @ v_i)
        lam = max(0.0, lam + dual_lr * (budget.threshold - e_vi))
        trace[it] = lam
    pi = _softmax_rows(logits)
    policy = np.argmax(pi, axis=1)
    v_r = float(cmdp.start @ policy_values(cmdp, policy, "reward", discount))
    v_i = float(
        cmdp.start @ policy_values(cmdp, policy, "indicator", budget.gamma_bar)
    )
    return PrimalDualResult(
        policy=policy,
        v_reward=v_r,
        v_indicator=v_i,
        feasible=bool(v_i >= budget.threshold - 1e-9),
        threshold=budget.threshold,
        lambda_trace=trace,
        stochastic_policy=pi,
    )


# ---------------------------------------------------------------------------
# Plain-text CMDP format: first line "n_states n_actions horizon" (horizon a
# positive integer or "inf"), then blocks "P s a: p0 p1 ...", "R s a: r",
# "C s a: c", and "start: d0 d1 ...". '#' starts a comment.
# ---------------------------------------------------------------------------


class CmdpFormatError(ValueError):
    pass


def load_cmdp(path) -> TabularCmdp:
    with open(path, "r", encoding="utf-8") as f:
        lines = []
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append(line)
    if not lines:
        raise CmdpFormatError(f"{path}: empty CMDP file")
    head = lines[0].split()
    if len(head) != 3:
        raise CmdpFormatError(f"{path}: first line must be 'n_states n_actions horizon'")
    try:
        n_states, n_actions = int(head[0]), int(head[1])
        horizon = math.inf if head[2] == "inf" else int(head[2])
    except ValueError as exc:
        raise CmdpFormatError(f"{path}: malformed header {lines[0]!r}") from exc
    if n_states < 1 or n_actions < 1:
        raise CmdpFormatError(f"{path}: state/action counts must be positive")
    transitions = np.full((n_states, n_actions, n_states), np.nan)
    rewards = np.zeros((n_states, n_actions))
    costs = np.zeros((n_states, n_actions))
    start = None
    for line in lines[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "start:":
            start = np.array([float(x) for x in rest.split()])
            continue
        if kind not in ("P", "R", "C"):
            raise CmdpFormatError(f"{path}: unknown block {line!r}")
        fields, _, values = rest.partition(":")
        try:
            s, a = (int(x) for x in fields.split())
            nums = [float(x) for x in values.split()]
        except ValueError as exc:
            raise CmdpFormatError(f"{path}: malformed block {line!r}") from exc
        if not (0 <= s < n_states and 0 <= a < n_actions):
            raise CmdpFormatError(f"{path}: (s={s}, a={a}) out of range in {line!r}")
        if kind == "P":
            if len(nums) != n_states:
                raise CmdpFormatError(f"{path}: P row needs {n_states} entries in {line!r}")
            transitions[s, a] = nums
        else:
            if len(nums) != 1:
                raise CmdpFormatError(f"{path}: {kind} block needs one value in {line!r}")
            (rewards if kind == "R" else costs)[s, a] = nums[0]
    if start is None:
        raise CmdpFormatError(f"{path}: missing 'start:' line")
    if np.any(np.isnan(transitions)):
        missing = np.argwhere(np.isnan(transitions).any(axis=2))
        raise CmdpFormatError(f"{path}: missing P rows for (s, a) pairs {missing.tolist()}")
    try:
        return TabularCmdp(
            transitions=transitions,
            rewards=rewards,
            costs=costs,
            start=start,
            horizon=horizon,
        )
    except ValueError as exc:
        raise CmdpFormatError(f"{path}: {exc}") from exc
