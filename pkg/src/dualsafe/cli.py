"""Command-line entry point.

Subcommands: train, evaluate, oracle-check, grad-check, export-plot.
Exit codes: 0 success, 1 config/usage error, 2 runtime divergence,
3 acceptance-check failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from .agents import SafetyBudget
from .config import ConfigError, SEED_ENV_VAR, load_config
from .nets import CheckpointError, DivergenceError, gradient_check, mlp_init
from .oracle import CmdpFormatError, constrained_optimum, load_cmdp, tabular_primal_dual
from .trainer import (
    METRICS_COLUMNS,
    TrainConfig,
    evaluate,
    load_checkpoint,
    make_env,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGENCE = 2
EXIT_CHECK_FAILED = 3

GRAD_TOLERANCE = 1e-4
ORACLE_RETURN_TOLERANCE = 0.02
ORACLE_INDICATOR_SLACK = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; we reserve 2
        raise UsageError(message)


def _env_seed_default() -> int:
    text = os.environ.get(SEED_ENV_VAR, "")
    return int(text) if text else 0


def build_parser() -> _Parser:
    parser = _Parser(prog="dualsafe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the dual-agent training loop")
    p.add_argument("config", help="flat key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("evaluate", help="noise-free rollouts of a checkpointed actor")
    p.add_argument("checkpoint")
    p.add_argument("--env", choices=("corridor", "pusher"), default="corridor")
    p.add_argument("--actor", choices=("safe", "baseline"), default="safe")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("oracle-check",
                       help="compare tabular primal-dual against the enumeration oracle")
    p.add_argument("cmdp", help="plain-text CMDP file")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--gamma-bar", type=float, default=0.6)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--iterations", type=int, default=4000)

    p = sub.add_parser("grad-check", help="analytic vs finite-difference gradients")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--corrupt", action="store_true",
                   help="inject a sign flip to prove the checker catches faults")

    p = sub.add_parser("export-plot", help="extract one metric column as (step, value) CSV")
    p.add_argument("metrics", help="metrics CSV written by train")
    p.add_argument("column", help="metric column name")
    p.add_argument("--out", default=None, help="output path (default <column>.csv)")
    return parser


def cmd_train(args) -> int:
    config = load_config(args.config, args.overrides)
    if config.baseline_mode.startswith("checkpoint:"):
        path = config.baseline_mode.split(":", 1)[1]
        if not os.path.exists(path):
            raise ConfigError(f"baseline checkpoint not found: {path}")
    result = train(config)
    print(f"wrote {result.metrics_path} and {result.checkpoint_path} "
          f"({result.steps} steps, final lambda {result.final_lambda:.6g})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    seed = args.seed if args.seed is not None else _env_seed_default()
    nets, _footer = load_checkpoint(args.checkpoint)
    name = f"{args.actor}_actor"
    if name not in nets:
        raise CheckpointError(f"{args.checkpoint}: no {name} network")
    actor = nets[name]
    env = make_env(TrainConfig(env_name=args.env))
    if actor.in_dim != env.obs_dim or actor.out_dim != env.action_dim:
        raise CheckpointError(
            f"{name} is {actor.in_dim}->{actor.out_dim}, "
            f"{args.env} needs {env.obs_dim}->{env.action_dim}"
        )
    report = evaluate(actor, env, args.episodes, seed)
    print("mean_return,std_return,mean_cost,std_cost,violation_rate,success_rate,episodes")
    success = "" if report.success_rate is None else format(report.success_rate, ".10g")
    print(
        f"{report.mean_return:.10g},{report.std_return:.10g},"
        f"{report.mean_cost:.10g},{report.std_cost:.10g},"
        f"{report.violation_rate:.10g},{success},{report.episodes}"
    )
    return EXIT_OK


def _fmt_policy(policy) -> str:
    return "[" + " ".join(str(int(a)) for a in policy) + "]"


def cmd_oracle_check(args) -> int:
    cmdp = load_cmdp(args.cmdp)
    budget = SafetyBudget.create(args.delta, args.gamma_bar, cmdp.horizon)
    oracle = constrained_optimum(cmdp, budget, discount=args.gamma)
    print(f"threshold Gamma            : {budget.threshold:.10g}")
    print(f"unconstrained optimum      : policy {_fmt_policy(oracle.unconstrained_policy)} "
          f"V_R {oracle.unconstrained_v_reward:.10g} V_I {oracle.unconstrained_v_indicator:.10g}")
    if not oracle.feasible:
        print(f"enumeration                : INFEASIBLE (best V_I {oracle.v_indicator:.10g} "
              f"< Gamma {budget.threshold:.10g})")
        pd = tabular_primal_dual(cmdp, budget, discount=args.gamma,
                                 iterations=args.iterations)
        lam = pd.lambda_trace
        growing = bool(np.all(np.diff(lam) >= 0)) and lam[-1] > lam[0]
        print(f"primal-dual                : infeasible={not pd.feasible}, "
              f"lambda grew {lam[0]:.6g} -> {lam[-1]:.6g}"
              f"{' monotonically' if growing else ''}")
        print("no policy can satisfy the safety threshold on this instance")
        return EXIT_CHECK_FAILED
    print(f"enumeration (constrained)  : policy {_fmt_policy(oracle.policy)} "
          f"V_R {oracle.v_reward:.10g} V_I {oracle.v_indicator:.10g}")
    pd = tabular_primal_dual(cmdp, budget, discount=args.gamma, iterations=args.iterations)
    print(f"primal-dual (extracted)    : policy {_fmt_policy(pd.policy)} "
          f"V_R {pd.v_reward:.10g} V_I {pd.v_indicator:.10g} "
          f"feasible={pd.feasible} final lambda {pd.lambda_trace[-1]:.6g}")
    reward_gap = abs(pd.v_reward - oracle.v_reward) / max(abs(oracle.v_reward), 1e-12)
    ok = (
        pd.feasible
        and pd.v_indicator >= budget.threshold - ORACLE_INDICATOR_SLACK
        and reward_gap <= ORACLE_RETURN_TOLERANCE
    )
    print(f"reward gap {reward_gap:.3%} (tolerance {ORACLE_RETURN_TOLERANCE:.0%}) "
          f"-> {'MATCH' if ok else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


GRAD_SUITE_SHAPES = (
    ((1, 1), "identity"),
    ((1, 1), "tanh"),
    ((4, 8, 2), "tanh"),
    ((4, 8, 2), "identity"),
    ((16, 16, 16, 4), "tanh"),
    ((16, 16, 16, 4), "identity"),
    ((3, 12, 1), "identity"),
    ((2, 5, 5, 3), "tanh"),
)


def cmd_grad_check(args) -> int:
    seed = args.seed if args.seed is not None else _env_seed_default()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i, (shape, activation) in enumerate(GRAD_SUITE_SHAPES):
        net = mlp_init(shape, activation, seed=seed + i)
        x = rng.normal(0.0, 1.0, size=(4, shape[0]))
        err = gradient_check(net, x, eps=1e-5,
                             corrupt_layer=0 if args.corrupt else None)
        worst = max(worst, err)
    status = "OK" if worst < GRAD_TOLERANCE else "FAIL"
    print(f"max relative error {worst:.3e} (tolerance {GRAD_TOLERANCE:g}) {status}")
    return EXIT_OK if worst < GRAD_TOLERANCE else EXIT_CHECK_FAILED


def cmd_export_plot(args) -> int:
    if args.column not in METRICS_COLUMNS or args.column == "step":
        valid = ", ".join(c for c in METRICS_COLUMNS if c != "step")
        raise UsageError(f"unknown column {args.column!r}; valid columns: {valid}")
    if not os.path.exists(args.metrics):
        raise UsageError(f"metrics file not found: {args.metrics}")
    with open(args.metrics, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f if not ln.startswith("#")]
    if not lines:
        raise UsageError(f"{args.metrics}: no CSV content")
    header = lines[0].split(",")
    if "step" not in header or args.column not in header:
        raise UsageError(f"{args.metrics}: header does not contain {args.column!r}")
    step_i, col_i = header.index("step"), header.index(args.column)
    out_lines = [f"step,{args.column}"]
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(header):
            raise UsageError(f"{args.metrics}: malformed row {line!r}")
        if parts[col_i] != "":
            out_lines.append(f"{parts[step_i]},{parts[col_i]}")
    out_path = args.out if args.out is not None else f"{args.column}.csv"
    directory = os.path.dirname(os.path.abspath(out_path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write("\n".join(out_lines) + "\n")
        os.replace(tmp, out_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    print(f"wrote {out_path} ({len(out_lines) - 1} points)")
    return EXIT_OK


_COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "oracle-check": cmd_oracle_check,
    "grad-check": cmd_grad_check,
    "export-plot": cmd_export_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, CmdpFormatError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
