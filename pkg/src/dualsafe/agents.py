"""Dual-agent update rules: safety threshold, twin-critic regression,
deterministic-policy-gradient ascent, behavior cloning, and the projected
Lagrange multiplier step.

The baseline agent maximizes reward; the safe agent minimizes the squared
L2 distance to the baseline's actions subject to its discounted safety
indicator value staying above the threshold. Both act deterministically in
a normalized [-1, 1]^d action space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nets import AdamState, Mlp, adam_init, adam_step, mlp_forward, mlp_backward, mlp_init


def safety_threshold(delta: float, gamma_bar: float, horizon) -> float:
    """Lower bound on the buffer-averaged discounted indicator value that a
    (1-delta)-safe policy must meet.

    Finite horizon T:
        (1-delta) * [T(1-g) - g(1-g^T)] / [T(1-g)^2]   with g = gamma_bar.
    Infinite horizon: (1-delta) / (1-gamma_bar).
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must be in [0, 1], got {delta}")
    if not 0.0 <= gamma_bar < 1.0:
        raise ValueError(f"gamma_bar must be in [0, 1), got {gamma_bar}")
    g = float(gamma_bar)
    if horizon == math.inf:
        return (1.0 - delta) / (1.0 - g)
    t = int(horizon)
    if t < 1 or t != horizon:
        raise ValueError(f"horizon must be a positive integer or inf, got {horizon}")
    return (1.0 - delta) * (t * (1.0 - g) - g * (1.0 - g**t)) / (t * (1.0 - g) ** 2)


@dataclass(frozen=True)
class SafetyBudget:
    """Constraint bundle: (delta, gamma_bar, horizon) and the implied threshold."""

    delta: float
    gamma_bar: float
    horizon: float
    threshold: float

    @classmethod
    def create(cls, delta: float, gamma_bar: float, horizon) -> "SafetyBudget":
        return cls(
            delta=float(delta),
            gamma_bar=float(gamma_bar),
            horizon=horizon,
            threshold=safety_threshold(delta, gamma_bar, horizon),
        )


@dataclass
class BaselineAgent:
    """Reward-maximizing actor with twin critics and Polyak targets."""

    actor: Mlp
    critic_1: Mlp
    critic_2: Mlp
    actor_target: Mlp
    critic_1_target: Mlp
    critic_2_target: Mlp
    gamma: float
    actor_opt: AdamState
    critic_1_opt: AdamState
    critic_2_opt: AdamState


@dataclass
class SafeAgent:
    """Behavior-cloning actor with twin safety critics and multiplier state."""

    actor: Mlp
    critic_1: Mlp
    critic_2: Mlp
    actor_target: Mlp
    critic_1_target: Mlp
    critic_2_target: Mlp
    budget: SafetyBudget
    lam: float
    eta_lambda: float
    actor_opt: AdamState
    critic_1_opt: AdamState
    critic_2_opt: AdamState


def _net_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]


def make_baseline_agent(
    obs_dim: int,
    act_dim: int,
    hidden_sizes=(64, 64),
    gamma: float = 0.99,
    actor_lr: float = 1e-3,
    critic_lr: float = 1e-3,
    seed: int = 0,
) -> BaselineAgent:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    s = _net_seeds(seed, 3)
    actor = mlp_init((obs_dim, *hidden_sizes, act_dim), "tanh", seed=s[0])
    critic_1 = mlp_init((obs_dim + act_dim, *hidden_sizes, 1), "identity", seed=s[1])
    critic_2 = mlp_init((obs_dim + act_dim, *hidden_sizes, 1), "identity", seed=s[2])
    return BaselineAgent(
        actor=actor,
        critic_1=critic_1,
        critic_2=critic_2,
        actor_target=actor.copy(),
        critic_1_target=critic_1.copy(),
        critic_2_target=critic_2.copy(),
        gamma=float(gamma),
        actor_opt=adam_init(actor, actor_lr),
        critic_1_opt=adam_init(critic_1, critic_lr),
        critic_2_opt=adam_init(critic_2, critic_lr),
    )


def make_safe_agent(
    obs_dim: int,
    act_dim: int,
    budget: SafetyBudget,
    hidden_sizes=(64, 64),
    eta_lambda: float = 1e-3,
    actor_lr: float = 1e-3,
    critic_lr: float = 1e-3,
    seed: int = 1,
) -> SafeAgent:
    if eta_lambda <= 0:
        raise ValueError("eta_lambda must be positive")
    s = _net_seeds(seed, 3)
    actor = mlp_init((obs_dim, *hidden_sizes, act_dim), "tanh", seed=s[0])
    critic_1 = mlp_init((obs_dim + act_dim, *hidden_sizes, 1), "identity", seed=s[1])
    critic_2 = mlp_init((obs_dim + act_dim, *hidden_sizes, 1), "identity", seed=s[2])
    return SafeAgent(
        actor=actor,
        critic_1=critic_1,
        critic_2=critic_2,
        actor_target=actor.copy(),
        critic_1_target=critic_1.copy(),
        critic_2_target=critic_2.copy(),
        budget=budget,
        lam=0.0,
        eta_lambda=float(eta_lambda),
        actor_opt=adam_init(actor, actor_lr),
        critic_1_opt=adam_init(critic_1, critic_lr),
        critic_2_opt=adam_init(critic_2, critic_lr),
    )


def critic_values(critic: Mlp, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Scalar critic evaluated on (state, action) rows; returns shape (batch,)."""
    x = np.concatenate([states, actions], axis=1)
    return mlp_forward(critic, x)[0][:, 0]


def critic_value_and_action_grad(
    critic: Mlp, states: np.ndarray, actions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Critic values and dQ/da per row (the DPG chain-rule ingredient)."""
    x = np.concatenate([states, actions], axis=1)
    out, cache = mlp_forward(critic, x)
    _, input_grad = mlp_backward(critic, cache, np.ones_like(out))
    return out[:, 0], input_grad[:, states.shape[1] :]


def critic_target(signal, discount: float, q1_next, q2_next, terminal):
    """Bootstrapped regression target: signal + discount * min(q1, q2),
    with bootstrapping masked at terminal steps."""
    if not 0.0 <= discount <= 1.0:
        raise ValueError(f"discount must be in [0, 1], got {discount}")
    signal = np.asarray(signal, dtype=np.float64)
    q_min = np.minimum(np.asarray(q1_next, dtype=np.float64), q2_next)
    cont = 1.0 - np.asarray(terminal, dtype=np.float64)
    y = signal + discount * q_min * cont
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite critic target")
    return y if y.ndim else float(y)


def critic_update(agent, states: np.ndarray, actions: np.ndarray, targets) -> tuple[float, float]:
    """One mean-squared-error step on each twin critic; returns pre-step losses."""
    targets = np.asarray(targets, dtype=np.float64)
    n = states.shape[0]
    x = np.concatenate([states, actions], axis=1)
    losses = []
    for critic, opt in (
        (agent.critic_1, agent.critic_1_opt),
        (agent.critic_2, agent.critic_2_opt),
    ):
        out, cache = mlp_forward(critic, x)
        resid = out[:, 0] - targets
        losses.append(float(np.mean(resid**2)))
        grads, _ = mlp_backward(critic, cache, (2.0 * resid / n)[:, None])
        adam_step(critic, grads, opt)
    return losses[0], losses[1]


def dpg_actor_grads(actor: Mlp, states: np.ndarray, value_and_action_grad):
    """Parameter gradients of mean_s[ V(s, pi(s)) ] through the actor.

    value_and_action_grad(states, actions) must return (values (batch,),
    dV/da (batch, act_dim)). Returns (objective, [(dW, db) per layer]).
    """
    out, cache = mlp_forward(actor, states)
    values, dv_da = value_and_action_grad(states, out)
    grads, _ = mlp_backward(actor, cache, dv_da / states.shape[0])
    return float(np.mean(values)), grads


def baseline_actor_update(agent: BaselineAgent, states: np.ndarray) -> float:
    """One ascent step on mean Q_1(s, pi(s)); returns the pre-step objective."""
    objective, grads = dpg_actor_grads(
        agent.actor,
        states,
        lambda s, a: critic_value_and_action_grad(agent.critic_1, s, a),
    )
    adam_step(agent.actor, [(-dw, -db) for dw, db in grads], agent.actor_opt)
    return objective


def policy_actions(policy, states: np.ndarray) -> np.ndarray:
    """Batch actions from an Mlp actor or a per-state callable."""
    if isinstance(policy, Mlp):
        return mlp_forward(policy, states)[0]
    return np.stack([np.asarray(policy(s), dtype=np.float64) for s in states])


def bc_distance(safe_actor: Mlp, baseline, states: np.ndarray) -> float:
    """Batch-mean squared Euclidean distance between the two actors' actions."""
    a_safe = mlp_forward(safe_actor, states)[0]
    a_base = policy_actions(baseline, states)
    if a_base.shape != a_safe.shape:
        raise ValueError(
            f"action widths differ: {a_safe.shape} vs {a_base.shape}"
        )
    return float(np.mean(np.sum((a_safe - a_base) ** 2, axis=1)))


def constraint_estimate(agent: SafeAgent, states: np.ndarray) -> float:
    """Q-bar: batch-mean of min(Q_1, Q_2) at the safe actor's own actions."""
    actions = mlp_forward(agent.actor, states)[0]
    q1 = critic_values(agent.critic_1, states, actions)
    q2 = critic_values(agent.critic_2, states, actions)
    return float(np.mean(np.minimum(q1, q2)))


def safe_actor_update(agent: SafeAgent, baseline, states: np.ndarray) -> tuple[float, float]:
    """One descent step on D-bar(phi) - lambda * mean Q_1(s, pi_S(s)).

    Returns the pre-step behavior-cloning distance and the pre-step
    constraint estimate (min over twin safety critics). Only the safe
    actor's parameters move.
    """
    a_base = policy_actions(baseline, states)
    out, cache = mlp_forward(agent.actor, states)
    if a_base.shape != out.shape:
        raise ValueError(f"action widths differ: {out.shape} vs {a_base.shape}")
    diff = out - a_base
    d_bar = float(np.mean(np.sum(diff**2, axis=1)))
    q1, dq1_da = critic_value_and_action_grad(agent.critic_1, states, out)
    q2 = critic_values(agent.critic_2, states, out)
    q_bar = float(np.mean(np.minimum(q1, q2)))
    n = states.shape[0]
    out_grad = (2.0 * diff - agent.lam * dq1_da) / n
    grads, _ = mlp_backward(agent.actor, cache, out_grad)
    adam_step(agent.actor, grads, agent.actor_opt)
    return d_bar, q_bar


def lambda_update(lam: float, threshold: float, q_bar: float, eta_lambda: float) -> float:
    """Projected dual ascent: max(0, lam + eta * (threshold - q_bar))."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if eta_lambda <= 0:
        raise ValueError("eta_lambda must be positive")
    return max(0.0, lam + eta_lambda * (threshold - q_bar))


def polyak_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """target <- tau * online + (1 - tau) * target, elementwise, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    if target.layer_sizes != online.layer_sizes:
        raise ValueError("target/online shapes differ")
    for t, o in zip(target.param_arrays(), online.param_arrays()):
        t *= 1.0 - tau
        t += tau * o
    return target


def select_action(
    actor: Mlp,
    state: np.ndarray,
    sigma: float,
    action_low: float,
    action_high: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Actor output plus iid Gaussian noise, clipped to the action bounds."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    out = mlp_forward(actor, np.asarray(state, dtype=np.float64)[None, :])[0][0]
    if sigma > 0:
        out = out + rng.normal(0.0, sigma, size=out.shape)
    return np.clip(out, action_low, action_high)
