"""Constrained optimum by brute force, recovered by primal-dual iteration.

At tiny scale the constrained problem "maximize reward value subject to the
indicator value staying above Gamma" can be solved exactly by enumerating
every deterministic policy. The primal-dual solver then has to match it:
a softmax tabular policy follows exact Lagrangian advantages while the
multiplier integrates the constraint violation.

Run: python3 demos/tabular_oracle.py
"""
import numpy as np

from dualsafe import (
    SafetyBudget,
    builtin_cmdp_path,
    constrained_optimum,
    load_cmdp,
    tabular_primal_dual,
)

for name in ("no_risk", "risky_shortcut", "detour", "infeasible"):
    cmdp = load_cmdp(builtin_cmdp_path(name))
    budget = SafetyBudget.create(delta=0.05, gamma_bar=0.6, horizon=cmdp.horizon)
    oracle = constrained_optimum(cmdp, budget, discount=0.9)
    solved = tabular_primal_dual(cmdp, budget, discount=0.9)

    print(f"=== {name} (|S|={cmdp.n_states}, |A|={cmdp.n_actions}, "
          f"Gamma={budget.threshold:.4f})")
    print(f"  unconstrained optimum : policy {oracle.unconstrained_policy}, "
          f"V_R {oracle.unconstrained_v_reward:.4f}, "
          f"V_I {oracle.unconstrained_v_indicator:.4f}")
    if oracle.feasible:
        print(f"  enumeration oracle    : policy {oracle.policy}, "
              f"V_R {oracle.v_reward:.4f}, V_I {oracle.v_indicator:.4f}")
        gap = abs(solved.v_reward - oracle.v_reward) / abs(oracle.v_reward)
        print(f"  primal-dual recovery  : policy {solved.policy}, "
              f"V_R {solved.v_reward:.4f}, V_I {solved.v_indicator:.4f}, "
              f"reward gap {gap:.2%}")
        lam = solved.lambda_trace
        print(f"  multiplier trace      : starts {lam[0]:.4f}, "
              f"peaks {lam.max():.4f}, ends {lam[-1]:.4f}")
    else:
        lam = solved.lambda_trace
        monotone = bool(np.all(np.diff(lam) >= 0))
        print("  no feasible policy exists at this threshold")
        print(f"  multiplier trace      : grows without bound "
              f"({lam[0]:.3f} -> {lam[-1]:.3f}, monotone={monotone})")
    print()
