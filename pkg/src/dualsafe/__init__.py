"""Dual-agent safe reinforcement learning at desk scale.

A reward-maximizing baseline policy and a risk-aware safe policy share one
replay buffer. The baseline trains by deterministic policy gradient; the
safe policy clones the baseline online while a projected Lagrange
multiplier enforces a lower bound on its discounted safety-indicator value.
"""
from importlib import resources

from .agents import (
    BaselineAgent,
    SafeAgent,
    SafetyBudget,
    baseline_actor_update,
    bc_distance,
    constraint_estimate,
    critic_target,
    critic_update,
    lambda_update,
    make_baseline_agent,
    make_safe_agent,
    polyak_update,
    safe_actor_update,
    safety_threshold,
    select_action,
)
from .envs import CorridorEnv, PusherEnv, StepResult, TabularCmdp, indicator, tabular_step
from .nets import (
    AdamState,
    CheckpointError,
    DivergenceError,
    ForwardCache,
    Mlp,
    adam_init,
    adam_step,
    gradient_check,
    load_networks,
    mlp_backward,
    mlp_forward,
    mlp_init,
    save_networks,
)
from .oracle import (
    OracleSolution,
    PrimalDualResult,
    constrained_optimum,
    load_cmdp,
    policy_values,
    safety_threshold_by_sum,
    tabular_primal_dual,
)
from .replay import ReplayBuffer, Transition, TransitionBatch
from .trainer import (
    EvalReport,
    TrainConfig,
    TrainResult,
    evaluate,
    load_checkpoint,
    make_env,
    normalized_policy,
    save_checkpoint,
    scripted_controller,
    train,
)

__version__ = "0.1.0"


def builtin_cmdp_path(name: str) -> str:
    """Filesystem path of a shipped CMDP instance (e.g. 'risky_shortcut')."""
    ref = resources.files("dualsafe") / "cmdps" / f"{name}.txt"
    if not ref.is_file():
        available = sorted(
            p.name.removesuffix(".txt")
            for p in (resources.files("dualsafe") / "cmdps").iterdir()
            if p.name.endswith(".txt")
        )
        raise ValueError(f"unknown CMDP instance {name!r}; available: {available}")
    return str(ref)
