"""End-to-end training loop: shared replay, coin-flip action selection
between the two policies, baseline updates (when learnable), safe-policy
correction with the projected multiplier step, evaluation, metrics, and
checkpointing.

Agents act in a normalized [-1, 1]^d action space; environment actions are
obtained by multiplying with env.action_scale. Runs are deterministic
functions of the config (including the seed): identical configs produce
byte-identical metrics files.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .agents import (
    BaselineAgent,
    SafeAgent,
    SafetyBudget,
    baseline_actor_update,
    constraint_estimate,
    critic_target,
    critic_update,
    critic_values,
    lambda_update,
    make_baseline_agent,
    make_safe_agent,
    polyak_update,
    safe_actor_update,
)
from .envs import CorridorEnv, PusherEnv
from .nets import (
    CheckpointError,
    Mlp,
    load_networks,
    mlp_forward,
    save_networks,
)
from .replay import ReplayBuffer, Transition

SCRIPTED_NAMES = ("full_throttle_x", "straight_line_push")

METRICS_COLUMNS = (
    "step",
    "mode",
    "episode_return_B",
    "episode_return_S",
    "episode_cost_B",
    "episode_cost_S",
    "violation_rate_S",
    "lambda",
    "q_bar",
    "bc_loss",
    "critic_loss_R",
    "critic_loss_I",
    "success_rate",
)


@dataclass
class TrainConfig:
    env_name: str = "corridor"
    env_params: dict = field(default_factory=dict)
    baseline_mode: str = "learnable"  # learnable | checkpoint:<path> | scripted:<name>
    total_steps: int = 100_000
    warmup_steps: int = 1_000
    batch_size: int = 256
    replay_capacity: int = 1_000_000
    hidden_sizes: tuple[int, ...] = (64, 64)
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    eta_lambda: float = 1e-3
    tau: float = 0.005
    sigma: float = 0.1
    gamma: float = 0.99
    gamma_bar: float = 0.6
    delta: float = 0.05
    horizon: int | None = None  # None -> environment default
    seed: int = 0
    eval_every: int = 5_000
    eval_episodes: int = 5
    metrics_path: str = "metrics.csv"
    checkpoint_path: str = "final.ckpt"

    def validate(self) -> None:
        if self.env_name not in ("corridor", "pusher"):
            raise ValueError(f"unknown environment {self.env_name!r}")
        mode, _, arg = self.baseline_mode.partition(":")
        if mode == "learnable":
            if arg:
                raise ValueError("baseline_mode 'learnable' takes no argument")
        elif mode == "checkpoint":
            if not arg:
                raise ValueError("baseline_mode 'checkpoint:' needs a path")
        elif mode == "scripted":
            if arg not in SCRIPTED_NAMES:
                raise ValueError(
                    f"unknown scripted controller {arg!r}; known: {SCRIPTED_NAMES}"
                )
        else:
            raise ValueError(f"unknown baseline_mode {self.baseline_mode!r}")
        if self.total_steps < 0 or self.warmup_steps < 0:
            raise ValueError("step counts must be nonnegative")
        if self.batch_size < 1 or self.replay_capacity < 1:
            raise ValueError("batch_size and replay_capacity must be positive")
        if len(self.hidden_sizes) < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes must be positive integers")
        for name in ("actor_lr", "critic_lr", "eta_lambda"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gamma_bar < 1.0:
            raise ValueError("gamma_bar must be in [0, 1)")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must be in [0, 1]")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ValueError("eval_every and eval_episodes must be positive")

    def to_flat(self) -> dict[str, str]:
        """Canonical flat key=value view (echoed into metrics headers)."""
        out = {
            "env": self.env_name,
            "baseline_mode": self.baseline_mode,
            "total_steps": str(self.total_steps),
            "warmup_steps": str(self.warmup_steps),
            "batch_size": str(self.batch_size),
            "replay_capacity": str(self.replay_capacity),
            "hidden_sizes": ",".join(str(h) for h in self.hidden_sizes),
            "actor_lr": repr(self.actor_lr),
            "critic_lr": repr(self.critic_lr),
            "eta_lambda": repr(self.eta_lambda),
            "tau": repr(self.tau),
            "sigma": repr(self.sigma),
            "gamma": repr(self.gamma),
            "gamma_bar": repr(self.gamma_bar),
            "delta": repr(self.delta),
            "horizon": "" if self.horizon is None else str(self.horizon),
            "seed": str(self.seed),
            "eval_every": str(self.eval_every),
            "eval_episodes": str(self.eval_episodes),
            "metrics_path": self.metrics_path,
            "checkpoint_path": self.checkpoint_path,
        }
        for key, value in sorted(self.env_params.items()):
            out[f"env.{key}"] = repr(float(value))
        return out


def make_env(config: TrainConfig):
    params = dict(config.env_params)
    if config.env_name == "corridor":
        horizon = config.horizon if config.horizon is not None else 500
        return CorridorEnv(horizon=horizon, **params)
    horizon = config.horizon if config.horizon is not None else 50
    return PusherEnv(horizon=horizon, **params)


def scripted_controller(name: str, env):
    """Hand-coded deterministic baselines (env-scale actions, no learning)."""
    if name == "full_throttle_x":
        if not isinstance(env, CorridorEnv):
            raise ValueError("full_throttle_x drives the corridor environment")
        action = np.array([env.accel_limit, 0.0])
        return lambda obs: action.copy()
    if name == "straight_line_push":
        if not isinstance(env, PusherEnv):
            raise ValueError("straight_line_push drives the pusher environment")
        push_offset = env.object_radius
        parked = 0.9 * env.success_tol

        def controller(obs):
            obs = np.asarray(obs, dtype=np.float64)
            agent, obj, goal = obs[0:2], obs[2:4], obs[6:8]
            to_goal = goal - obj
            dist = np.linalg.norm(to_goal)
            if dist <= parked:
                return np.zeros(2)  # object delivered; hold position
            direction = to_goal / dist
            behind = obj - push_offset * direction
            if np.linalg.norm(agent - behind) < 0.5 * push_offset:
                target = obj  # in pushing position: drive into the object
            else:
                target = behind
            return target - agent  # env clips to the per-step increment

        return controller
    raise ValueError(f"unknown scripted controller {name!r}; known: {SCRIPTED_NAMES}")


def normalized_policy(policy, action_scale):
    """Adapt an Mlp actor or an env-scale controller to state -> [-1,1]^d."""
    if isinstance(policy, Mlp):
        def actor_policy(obs):
            return mlp_forward(policy, np.asarray(obs, dtype=np.float64)[None, :])[0][0]

        return actor_policy

    def controller_policy(obs):
        return np.clip(np.asarray(policy(obs), dtype=np.float64) / action_scale, -1.0, 1.0)

    return controller_policy


@dataclass(frozen=True)
class EvalReport:
    mean_return: float
    std_return: float
    mean_cost: float
    std_cost: float
    violation_rate: float
    success_rate: float | None
    episodes: int


def evaluate(policy, env, episodes: int, seed: int = 0) -> EvalReport:
    """Noise-free rollouts of a policy (Mlp actor or normalized callable)."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    policy_fn = normalized_policy(policy, env.action_scale) if isinstance(policy, Mlp) else policy
    rng = np.random.default_rng(seed)
    returns, costs = [], []
    unsafe_steps = 0
    total_steps = 0
    successes = 0
    for _ in range(episodes):
        obs = env.reset(int(rng.integers(0, 2**63)))
        ep_return = 0.0
        ep_cost = 0
        while True:
            action = np.clip(policy_fn(obs), -1.0, 1.0)
            result = env.step(action * env.action_scale)
            ep_return += result.reward
            ep_cost += 1 - result.indicator
            unsafe_steps += 1 - result.indicator
            total_steps += 1
            obs = result.next_state
            if result.terminal:
                break
        returns.append(ep_return)
        costs.append(ep_cost)
        if env.reports_success:
            successes += int(env.succeeded)
    return EvalReport(
        mean_return=float(np.mean(returns)),
        std_return=float(np.std(returns)),
        mean_cost=float(np.mean(costs)),
        std_cost=float(np.std(costs)),
        violation_rate=unsafe_steps / total_steps if total_steps else 0.0,
        success_rate=successes / episodes if env.reports_success else None,
        episodes=episodes,
    )


@dataclass
class TrainResult:
    config: TrainConfig
    metrics_path: str
    checkpoint_path: str
    steps: int
    pushes: int
    coin_flips: int
    coin_heads: int
    baseline_updates: int
    safe_updates: int
    final_lambda: float
    safe_agent: SafeAgent
    baseline_agent: BaselineAgent | None
    loaded_baseline: Mlp | None
    rows: list[dict]


def _footer(safe: SafeAgent) -> dict:
    b = safe.budget
    return {
        "lambda": float(safe.lam),
        "delta": float(b.delta),
        "gamma_bar": float(b.gamma_bar),
        "T": float(b.horizon),
        "Gamma": float(b.threshold),
    }


def _checkpoint_nets(baseline: BaselineAgent | None, loaded: Mlp | None, safe: SafeAgent):
    nets: dict[str, Mlp] = {}
    if baseline is not None:
        nets["baseline_actor"] = baseline.actor
        nets["baseline_critic_1"] = baseline.critic_1
        nets["baseline_critic_2"] = baseline.critic_2
        nets["baseline_actor_target"] = baseline.actor_target
        nets["baseline_critic_1_target"] = baseline.critic_1_target
        nets["baseline_critic_2_target"] = baseline.critic_2_target
    elif loaded is not None:
        nets["baseline_actor"] = loaded
    nets["safe_actor"] = safe.actor
    nets["safe_critic_1"] = safe.critic_1
    nets["safe_critic_2"] = safe.critic_2
    nets["safe_actor_target"] = safe.actor_target
    nets["safe_critic_1_target"] = safe.critic_1_target
    nets["safe_critic_2_target"] = safe.critic_2_target
    return nets


def save_checkpoint(path, safe: SafeAgent, baseline: BaselineAgent | None = None,
                    loaded_baseline: Mlp | None = None) -> None:
    save_networks(path, _checkpoint_nets(baseline, loaded_baseline, safe), _footer(safe))


def load_checkpoint(path):
    """Returns ({name: Mlp}, footer dict)."""
    nets, footer = load_networks(path)
    if footer is None:
        raise CheckpointError(f"{path}: missing budget footer")
    return nets, footer


def load_fixed_baseline(path, obs_dim: int, act_dim: int) -> Mlp:
    nets, _ = load_networks(path)
    if "baseline_actor" not in nets:
        raise CheckpointError(f"{path}: no baseline_actor network in checkpoint")
    actor = nets["baseline_actor"]
    if actor.in_dim != obs_dim or actor.out_dim != act_dim:
        raise CheckpointError(
            f"{path}: baseline_actor expects {actor.in_dim}->{actor.out_dim}, "
            f"environment needs {obs_dim}->{act_dim}"
        )
    return actor


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _write_metrics(path, config: TrainConfig, rows: list[dict]) -> None:
    lines = [f"# {k}={v}" for k, v in config.to_flat().items()]
    lines.append(",".join(METRICS_COLUMNS))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in METRICS_COLUMNS))
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def train(config: TrainConfig) -> TrainResult:
    config.validate()
    env = make_env(config)
    eval_env = make_env(config)
    obs_dim, act_dim = env.obs_dim, env.action_dim
    budget = SafetyBudget.create(config.delta, config.gamma_bar, env.horizon)

    seeds = np.random.SeedSequence(config.seed).spawn(7)
    init_seed = int(seeds[0].generate_state(1, dtype=np.uint64)[0])
    noise_rng = np.random.default_rng(seeds[1])
    coin_rng = np.random.default_rng(seeds[2])
    warmup_rng = np.random.default_rng(seeds[3])
    sample_rng = np.random.default_rng(seeds[4])
    episode_rng = np.random.default_rng(seeds[5])
    eval_rng = np.random.default_rng(seeds[6])

    safe = make_safe_agent_from_config(config, obs_dim, act_dim, budget, init_seed)
    mode, _, mode_arg = config.baseline_mode.partition(":")
    baseline_agent: BaselineAgent | None = None
    loaded_baseline: Mlp | None = None
    if mode == "learnable":
        baseline_agent = make_baseline_agent_from_config(config, obs_dim, act_dim, init_seed)
        baseline_for_bc = baseline_agent.actor
        baseline_policy = normalized_policy(baseline_agent.actor, env.action_scale)
    elif mode == "checkpoint":
        loaded_baseline = load_fixed_baseline(mode_arg, obs_dim, act_dim)
        baseline_for_bc = loaded_baseline
        baseline_policy = normalized_policy(loaded_baseline, env.action_scale)
    else:
        controller = scripted_controller(mode_arg, env)
        baseline_policy = normalized_policy(controller, env.action_scale)
        baseline_for_bc = baseline_policy
    safe_policy = normalized_policy(safe.actor, env.action_scale)

    buffer = ReplayBuffer(config.replay_capacity, obs_dim, act_dim)
    rows: list[dict] = []
    last = {"q_bar": None, "bc_loss": None, "critic_loss_R": None, "critic_loss_I": None}
    pushes = coin_flips = coin_heads = baseline_updates = safe_updates = 0

    def emit_row(step: int) -> None:
        seed_b = int(eval_rng.integers(0, 2**63))
        seed_s = int(eval_rng.integers(0, 2**63))
        report_b = evaluate(baseline_policy, eval_env, config.eval_episodes, seed_b)
        report_s = evaluate(safe_policy, eval_env, config.eval_episodes, seed_s)
        rows.append(
            {
                "step": step,
                "mode": config.baseline_mode,
                "episode_return_B": report_b.mean_return,
                "episode_return_S": report_s.mean_return,
                "episode_cost_B": report_b.mean_cost,
                "episode_cost_S": report_s.mean_cost,
                "violation_rate_S": report_s.violation_rate,
                "lambda": safe.lam,
                "q_bar": last["q_bar"],
                "bc_loss": last["bc_loss"],
                "critic_loss_R": last["critic_loss_R"],
                "critic_loss_I": last["critic_loss_I"],
                "success_rate": report_s.success_rate,
            }
        )

    obs = env.reset(int(episode_rng.integers(0, 2**63)))
    emit_row(0)
    for t in range(1, config.total_steps + 1):
        if t <= config.warmup_steps:
            action = warmup_rng.uniform(-1.0, 1.0, size=act_dim)
        else:
            coin_flips += 1
            if coin_rng.random() < 0.5:
                coin_heads += 1
                raw = baseline_policy(obs)
            else:
                raw = safe_policy(obs)
            action = np.clip(raw + noise_rng.normal(0.0, config.sigma, size=act_dim), -1.0, 1.0)
        result = env.step(action * env.action_scale)
        buffer.push(
            Transition(obs, action, result.reward, result.indicator,
                       result.next_state, result.terminal)
        )
        pushes += 1
        obs = result.next_state
        if result.terminal:
            obs = env.reset(int(episode_rng.integers(0, 2**63)))

        if t > config.warmup_steps:
            batch = buffer.sample(config.batch_size, sample_rng)
            if baseline_agent is not None:
                next_actions = mlp_forward(baseline_agent.actor_target, batch.next_states)[0]
                y = critic_target(
                    batch.rewards,
                    config.gamma,
                    critic_values(baseline_agent.critic_1_target, batch.next_states, next_actions),
                    critic_values(baseline_agent.critic_2_target, batch.next_states, next_actions),
                    batch.terminals,
                )
                loss_r = critic_update(baseline_agent, batch.states, batch.actions, y)
                baseline_actor_update(baseline_agent, batch.states)
                polyak_update(baseline_agent.actor_target, baseline_agent.actor, config.tau)
                polyak_update(baseline_agent.critic_1_target, baseline_agent.critic_1, config.tau)
                polyak_update(baseline_agent.critic_2_target, baseline_agent.critic_2, config.tau)
                baseline_updates += 1
                last["critic_loss_R"] = 0.5 * (loss_r[0] + loss_r[1])

            next_actions = mlp_forward(safe.actor_target, batch.next_states)[0]
            y_bar = critic_target(
                batch.indicators,
                config.gamma_bar,
                critic_values(safe.critic_1_target, batch.next_states, next_actions),
                critic_values(safe.critic_2_target, batch.next_states, next_actions),
                batch.terminals,
            )
            loss_i = critic_update(safe, batch.states, batch.actions, y_bar)
            d_bar, _ = safe_actor_update(safe, baseline_for_bc, batch.states)
            q_bar = constraint_estimate(safe, batch.states)
            safe.lam = lambda_update(safe.lam, budget.threshold, q_bar, config.eta_lambda)
            polyak_update(safe.actor_target, safe.actor, config.tau)
            polyak_update(safe.critic_1_target, safe.critic_1, config.tau)
            polyak_update(safe.critic_2_target, safe.critic_2, config.tau)
            safe_updates += 1
            last["critic_loss_I"] = 0.5 * (loss_i[0] + loss_i[1])
            last["bc_loss"] = d_bar
            last["q_bar"] = q_bar

        if t % config.eval_every == 0:
            emit_row(t)

    _write_metrics(config.metrics_path, config, rows)
    save_checkpoint(config.checkpoint_path, safe, baseline_agent, loaded_baseline)
    return TrainResult(
        config=config,
        metrics_path=config.metrics_path,
        checkpoint_path=config.checkpoint_path,
        steps=config.total_steps,
        pushes=pushes,
        coin_flips=coin_flips,
        coin_heads=coin_heads,
        baseline_updates=baseline_updates,
        safe_updates=safe_updates,
        final_lambda=safe.lam,
        safe_agent=safe,
        baseline_agent=baseline_agent,
        loaded_baseline=loaded_baseline,
        rows=rows,
    )


def make_baseline_agent_from_config(config: TrainConfig, obs_dim, act_dim, seed) -> BaselineAgent:
    return make_baseline_agent(
        obs_dim,
        act_dim,
        hidden_sizes=config.hidden_sizes,
        gamma=config.gamma,
        actor_lr=config.actor_lr,
        critic_lr=config.critic_lr,
        seed=seed,
    )


def make_safe_agent_from_config(config: TrainConfig, obs_dim, act_dim, budget, seed) -> SafeAgent:
    return make_safe_agent(
        obs_dim,
        act_dim,
        budget,
        hidden_sizes=config.hidden_sizes,
        eta_lambda=config.eta_lambda,
        actor_lr=config.actor_lr,
        critic_lr=config.critic_lr,
        seed=seed + 1,
    )
