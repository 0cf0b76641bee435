"""Flat key=value config files (one pair per line, '#' comments).

Unknown keys are rejected, every key has a documented default, and the
resolved config is echoed into the metrics file header for provenance.
"""
from __future__ import annotations

import os

from .trainer import SCRIPTED_NAMES, TrainConfig

SEED_ENV_VAR = "DUALSAFE_SEED"


class ConfigError(ValueError):
    pass


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_hidden(text: str) -> tuple[int, ...]:
    sizes = tuple(int(p) for p in text.split(",") if p.strip())
    if not sizes:
        raise ValueError("empty hidden_sizes")
    return sizes


def _parse_str(text: str) -> str:
    return text


# key -> (parser, default string, help)
KEY_SPECS = {
    "env": (_parse_str, "corridor", "environment: corridor | pusher"),
    "baseline_mode": (_parse_str, "learnable",
                      "learnable | checkpoint:<path> | scripted:<name>"),
    "total_steps": (_parse_int, "100000", "environment steps to run"),
    "warmup_steps": (_parse_int, "1000", "uniform-random steps before updates"),
    "batch_size": (_parse_int, "256", "mini-batch size N"),
    "replay_capacity": (_parse_int, "1000000", "replay buffer capacity"),
    "hidden_sizes": (_parse_hidden, "64,64", "comma-separated hidden layer sizes"),
    "actor_lr": (_parse_float, "0.001", "actor learning rate"),
    "critic_lr": (_parse_float, "0.001", "critic learning rate"),
    "eta_lambda": (_parse_float, "0.001", "dual (multiplier) learning rate"),
    "tau": (_parse_float, "0.005", "Polyak averaging coefficient"),
    "sigma": (_parse_float, "0.1", "exploration noise std (normalized actions)"),
    "gamma": (_parse_float, "0.99", "reward discount"),
    "gamma_bar": (_parse_float, "0.6", "safety-indicator discount"),
    "delta": (_parse_float, "0.05", "allowed per-step unsafety probability"),
    "horizon": (_parse_int, "", "episode length (default: 500 corridor / 50 pusher)"),
    "seed": (_parse_int, "", f"master seed (default: ${SEED_ENV_VAR} or 0)"),
    "eval_every": (_parse_int, "5000", "steps between metric rows"),
    "eval_episodes": (_parse_int, "5", "episodes per evaluation"),
    "metrics_path": (_parse_str, "metrics.csv", "metrics CSV output path"),
    "checkpoint_path": (_parse_str, "final.ckpt", "checkpoint output path"),
    # corridor parameters
    "env.dt": (_parse_float, "0.25", "corridor integration step (s)"),
    "env.y_bound": (_parse_float, "1.0", "corridor lateral safety boundary (m)"),
    "env.accel_limit": (_parse_float, "2.0", "corridor acceleration limit (m/s^2)"),
    "env.speed_limit": (_parse_float, "1.5", "corridor speed limit (m/s)"),
    "env.max_speed": (_parse_float, "2.0", "corridor terminal speed clamp (m/s)"),
    # pusher parameters
    "env.object_radius": (_parse_float, "0.05", "pusher object disk radius"),
    "env.obstacle_radius": (_parse_float, "0.05", "pusher obstacle disk radius"),
    "env.goal_radius": (_parse_float, "0.05", "pusher goal disk radius"),
    "env.success_tol": (_parse_float, "0.05", "object-to-goal success distance"),
    "env.step_limit": (_parse_float, "0.05", "pusher per-step increment limit"),
}

CORRIDOR_ENV_KEYS = {"env.dt", "env.y_bound", "env.accel_limit", "env.speed_limit",
                     "env.max_speed"}
PUSHER_ENV_KEYS = {"env.object_radius", "env.obstacle_radius", "env.goal_radius",
                   "env.success_tol", "env.step_limit"}


def parse_kv_line(line: str):
    """('key', 'value') from one config line, or None for blank/comment."""
    stripped = line.split("#", 1)[0].strip()
    if not stripped:
        return None
    key, sep, value = stripped.partition("=")
    if not sep:
        raise ConfigError(f"expected key=value, got {line.rstrip()!r}")
    return key.strip(), value.strip()


def parse_config_file(path) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            try:
                pair = parse_kv_line(line)
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
            if pair is None:
                continue
            key, value = pair
            if key not in KEY_SPECS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            raw[key] = value
    return raw


def apply_overrides(raw: dict[str, str], overrides) -> dict[str, str]:
    out = dict(raw)
    for item in overrides or ():
        pair = parse_kv_line(item)
        if pair is None:
            raise ConfigError(f"empty --set override {item!r}")
        key, value = pair
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown key {key!r} in --set override")
        out[key] = value
    return out


def resolve_config(raw: dict[str, str]) -> TrainConfig:
    """Typed TrainConfig from raw strings, with defaults and validation."""
    values: dict[str, object] = {}
    for key, (parser, default, _help) in KEY_SPECS.items():
        text = raw.get(key, default)
        if text == "":
            values[key] = None
            continue
        try:
            values[key] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw.get(key, default)!r} ({exc})") from None

    env_name = values["env"]
    if env_name not in ("corridor", "pusher"):
        raise ConfigError(f"env must be corridor or pusher, got {env_name!r}")
    allowed = CORRIDOR_ENV_KEYS if env_name == "corridor" else PUSHER_ENV_KEYS
    env_params = {}
    for key in raw:
        if key.startswith("env."):
            if key not in allowed:
                raise ConfigError(f"{key!r} does not apply to the {env_name} environment")
            env_params[key[len("env."):]] = values[key]

    seed = values["seed"]
    if seed is None:
        env_seed = os.environ.get(SEED_ENV_VAR, "")
        try:
            seed = int(env_seed) if env_seed else 0
        except ValueError:
            raise ConfigError(f"${SEED_ENV_VAR} must be an integer, got {env_seed!r}") from None

    config = TrainConfig(
        env_name=env_name,
        env_params=env_params,
        baseline_mode=values["baseline_mode"],
        total_steps=values["total_steps"],
        warmup_steps=values["warmup_steps"],
        batch_size=values["batch_size"],
        replay_capacity=values["replay_capacity"],
        hidden_sizes=values["hidden_sizes"],
        actor_lr=values["actor_lr"],
        critic_lr=values["critic_lr"],
        eta_lambda=values["eta_lambda"],
        tau=values["tau"],
        sigma=values["sigma"],
        gamma=values["gamma"],
        gamma_bar=values["gamma_bar"],
        delta=values["delta"],
        horizon=values["horizon"],
        seed=seed,
        eval_every=values["eval_every"],
        eval_episodes=values["eval_episodes"],
        metrics_path=values["metrics_path"],
        checkpoint_path=values["checkpoint_path"],
    )
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if config.baseline_mode.startswith("scripted:"):
        name = config.baseline_mode.split(":", 1)[1]
        wrong_env = (
            name == "full_throttle_x" and env_name != "corridor"
        ) or (name == "straight_line_push" and env_name != "pusher")
        if wrong_env:
            raise ConfigError(f"scripted controller {name!r} does not drive {env_name!r}")
    return config


def load_config(path, overrides=()) -> TrainConfig:
    return resolve_config(apply_overrides(parse_config_file(path), overrides))


__all__ = [
    "ConfigError",
    "KEY_SPECS",
    "SEED_ENV_VAR",
    "SCRIPTED_NAMES",
    "apply_overrides",
    "load_config",
    "parse_config_file",
    "resolve_config",
]
