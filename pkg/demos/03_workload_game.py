"""The workload game: a value that limits what any policy can achieve.

Nature spends action to push the scaled queueing state along a deviation;
the controller answers with a reflect-and-ride-the-curve strategy that
keeps the state on the cheapest point of each workload level set.  The
resulting maximization collapses to one scalar coordinate, and for simple
cost choices the optimal value is known in closed form.
"""
import numpy as np

from mdqueue.game import (
    CostFunctions,
    GameSpec,
    brute_force_value,
    min_curve_linear,
    reduce_to_workload,
    solve_value,
)
from mdqueue.rate import ClassParams

params = ClassParams(
    lam=np.array([1.0]), mu=np.array([1.0]), sigma2=np.array([1.0]),
    lam_tilde=np.zeros(1), mu_tilde=np.zeros(1),
)

# Linear holding cost h(x) = x, no terminal cost: the optimal deviation is
# the parabola 2t - t^2 and the value is exactly 1/3.
costs = CostFunctions.linear([1.0], [0.0])
spec = GameSpec(params=params, x=np.zeros(1), T=1.0, costs=costs,
                curve=min_curve_linear(costs, params))
red = reduce_to_workload(spec)
print("reduced diffusivity sigma_bar^2:", red.sigma_bar_sq)
V, s_path = solve_value(spec, K=200)
print(f"value with running cost only: {V:.5f}  (analytic 1/3)")
t = s_path.grid.nodes
print("max |s(t) - (2t - t^2)| on the optimizer:",
      float(np.max(np.abs(s_path.scalar_values() - (2 * t - t * t)))))

# Terminal cost g(x) = x instead: the optimal deviation is the line 2t and
# the value is exactly 1.
costs_t = CostFunctions.linear([0.0], [1.0])
spec_t = GameSpec(params=params, x=np.zeros(1), T=1.0, costs=costs_t,
                  curve=min_curve_linear(costs_t, params))
V_t, _ = solve_value(spec_t, K=200)
print(f"value with terminal cost only: {V_t:.5f}  (analytic 1)")

# The coarse full-dimensional oracle optimizes all channel increments
# directly and lands near the reduced answer.
V_bf = brute_force_value(spec, K=8)
print(f"full-dimensional oracle at a coarse grid: {V_bf:.4f}")
