"""Safe correction of a fixed, unsafe scripted pusher.

The baseline here is not learned at all: a hand-coded controller that
shoves the object straight at the goal, through whatever obstacle is in
the way. The safe agent imitates it online while its safety critics learn
where the obstacle hurts, and ends up pushing around the obstacle instead.
The controller itself is never modified.

Takes a couple of minutes. Run: python3 demos/pusher_correction.py
"""
import os
import tempfile

from dualsafe import PusherEnv, TrainConfig, evaluate, scripted_controller, train
from dualsafe.trainer import normalized_policy

workdir = tempfile.mkdtemp(prefix="dualsafe_pusher_")
config = TrainConfig(
    env_name="pusher",
    baseline_mode="scripted:straight_line_push",
    total_steps=40_000,
    warmup_steps=1_000,
    batch_size=128,
    hidden_sizes=(32, 32),
    eval_every=4_000,
    eval_episodes=10,
    seed=0,
    metrics_path=os.path.join(workdir, "metrics.csv"),
    checkpoint_path=os.path.join(workdir, "final.ckpt"),
)

env = PusherEnv()
controller = normalized_policy(scripted_controller("straight_line_push", env), env.action_scale)
baseline_report = evaluate(controller, env, episodes=20, seed=123)
print("scripted baseline on obstacle-in-path layouts:")
print(f"  success {baseline_report.success_rate:.2f}, "
      f"violation rate {baseline_report.violation_rate:.3f}\n")

print(f"{'step':>6} {'return_S':>9} {'succ_S':>7} {'viol_S':>7} {'lambda':>8}")
result = train(config)
for row in result.rows:
    print(f"{row['step']:6d} {row['episode_return_S']:9.2f} "
          f"{row['success_rate']:7.2f} {row['violation_rate_S']:7.3f} "
          f"{row['lambda']:8.3f}")

last = result.rows[-1]
print(f"\nsafe policy: success {last['success_rate']:.2f} at violation rate "
      f"{last['violation_rate_S']:.3f} (baseline was "
      f"{baseline_report.violation_rate:.3f}); the controller has no "
      f"parameters and was never touched.")
