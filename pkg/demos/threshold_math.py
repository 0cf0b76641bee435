"""Safety-threshold arithmetic.

A policy is (1-delta)-safe when its per-step probability of a zero-cost
step is at least 1-delta. Averaged over a replay buffer of T-step episodes,
that requirement turns into a lower bound Gamma on the discounted
safety-indicator value. This script evaluates the closed form, checks it
against the literal finite sum, and shows the infinite-horizon limit.

Run: python3 demos/threshold_math.py
"""
import math

from dualsafe import safety_threshold, safety_threshold_by_sum

print("Gamma as a function of (delta, gamma_bar, T)")
print(f"{'delta':>6} {'g_bar':>6} {'T':>6} {'closed form':>14} {'finite sum':>14}")
for delta in (0.0, 0.05, 0.5):
    for gamma_bar in (0.0, 0.6, 0.9):
        for horizon in (2, 50, 500):
            closed = safety_threshold(delta, gamma_bar, horizon)
            summed = safety_threshold_by_sum(delta, gamma_bar, horizon)
            assert abs(closed - summed) < 1e-9
            print(f"{delta:6.2f} {gamma_bar:6.2f} {horizon:6d} "
                  f"{closed:14.9f} {summed:14.9f}")

print("\nThe two derivations agree to 1e-9 everywhere above.")

print("\nInfinite-horizon limit (1-delta)/(1-gamma_bar):")
for gamma_bar in (0.6, 0.9, 0.99):
    gamma = safety_threshold(0.05, gamma_bar, math.inf)
    print(f"  gamma_bar={gamma_bar}: Gamma = {gamma:.6f}")

print("\nInterpretation: with gamma_bar=0.6 and T=500, a 0.95-safe policy")
print("must keep its buffer-averaged discounted indicator value above")
print(f"{safety_threshold(0.05, 0.6, 500):.4f} out of an attainable "
      f"{safety_threshold(0.0, 0.6, 500):.4f}.")
