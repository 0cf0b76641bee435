"""Co-trained corridor run: both agents learn from scratch.

The baseline agent learns to sprint along the corridor (and blows through
the 1.5 m/s speed limit at nearly every step); the safe agent clones it
until the growing multiplier makes the safety critics veto speeding. Watch
the safe policy's violation rate collapse while it keeps a solid fraction
of the baseline's return.

Takes a couple of minutes. Run: python3 demos/corridor_cotraining.py
"""
import os
import tempfile

from dualsafe import TrainConfig, train

workdir = tempfile.mkdtemp(prefix="dualsafe_corridor_")
config = TrainConfig(
    env_name="corridor",
    baseline_mode="learnable",
    total_steps=40_000,
    warmup_steps=1_000,
    batch_size=128,
    hidden_sizes=(32, 32),
    eval_every=4_000,
    eval_episodes=3,
    seed=0,
    metrics_path=os.path.join(workdir, "metrics.csv"),
    checkpoint_path=os.path.join(workdir, "final.ckpt"),
)

print(f"training for {config.total_steps} steps "
      f"(metrics -> {config.metrics_path})\n")
print(f"{'step':>6} {'return_B':>9} {'return_S':>9} {'viol_S':>7} "
      f"{'lambda':>8} {'bc_loss':>8}")
result = train(config)
for row in result.rows:
    bc = "" if row["bc_loss"] is None else f"{row['bc_loss']:8.4f}"
    print(f"{row['step']:6d} {row['episode_return_B']:9.1f} "
          f"{row['episode_return_S']:9.1f} {row['violation_rate_S']:7.3f} "
          f"{row['lambda']:8.3f} {bc:>8}")

last = result.rows[-1]
print(f"\nbaseline ends unsafe on ~{last['episode_cost_B']:.0f} of 500 steps;")
print(f"safe policy ends at violation rate {last['violation_rate_S']:.3f} "
      f"with {100 * last['episode_return_S'] / last['episode_return_B']:.0f}% "
      f"of the baseline's return.")
print(f"\nplot the multiplier with:\n  dualsafe export-plot "
      f"{config.metrics_path} lambda --out lambda.csv")
