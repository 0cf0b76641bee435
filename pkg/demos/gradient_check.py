"""Backpropagation vs central finite differences.

All actors and critics run on a small hand-written dense network. The
reverse-mode gradients are exact, and this script demonstrates the
finite-difference harness that proves it, including a deliberately broken
backward pass to show the checker is not vacuous.

Run: python3 demos/gradient_check.py
"""
import numpy as np

from dualsafe import gradient_check, mlp_init

rng = np.random.default_rng(0)

print("shape                 output    max relative error")
for shape, activation in [
    ((1, 1), "identity"),
    ((4, 8, 2), "tanh"),
    ((16, 16, 16, 4), "tanh"),
    ((16, 16, 16, 4), "identity"),
]:
    net = mlp_init(shape, activation, seed=rng.integers(2**31))
    x = rng.normal(size=(4, shape[0]))
    err = gradient_check(net, x, eps=1e-5)
    print(f"{str(shape):20s} {activation:9s} {err:.3e}")

print("\nNow flip the sign of one layer's analytic weight gradient:")
net = mlp_init((4, 8, 8, 2), "tanh", seed=3)
x = rng.normal(size=(4, 4))
clean = gradient_check(net, x, eps=1e-5)
broken = gradient_check(net, x, eps=1e-5, corrupt_layer=1)
print(f"intact backward pass : {clean:.3e}")
print(f"corrupted layer 1    : {broken:.3e}  (checker catches the fault)")
assert clean < 1e-4 < broken
