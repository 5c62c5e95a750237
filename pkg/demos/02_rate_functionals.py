"""Action functionals: the cost of forcing a path deviation.

A deviation psi of the centered arrival (or service) process carries a
quadratic action -- the integral of the squared slope, weighted by the
channel's variability.  Splitting a net deviation between the arrival and
service channels has a closed-form cheapest division, and for a single
critically loaded class the cost of an arbitrary nonnegative target path
can be evaluated directly.
"""
import numpy as np

from mdqueue.paths import SampledPath, TimeGrid
from mdqueue.rate import (
    ClassParams,
    SingleClassParams,
    action_arrivals,
    action_services,
    min_split_rate,
    single_class_rate,
)

params = ClassParams(
    lam=np.array([1.0]), mu=np.array([1.0]), sigma2=np.array([1.0]),
    lam_tilde=np.zeros(1), mu_tilde=np.zeros(1),
)
grid = TimeGrid(1.0, 400)
ramp = SampledPath(grid, grid.nodes[:, None])

print("action of a unit ramp, arrival channel:", action_arrivals(ramp, params))
print("action of a unit ramp, service channel:", action_services(ramp, params))
print("doubling the path quadruples the action:",
      action_arrivals(SampledPath(grid, 2 * ramp.values), params))

# Cheapest split of a net drift mdot = u - v across channels with
# diffusivities a and b: proportional allocation, total cost
# mdot^2 / (2 (a + b)).
u, v, cost = min_split_rate(mdot=1.0, a=2.0, b=1.0)
print(f"net rate 1.0 splits into arrival {u:.4f} minus service {-v:.4f}, "
      f"cost {cost:.4f}")

# Single-class rate of a tent-shaped customers-in-system target.  Under the
# reflected dynamics, holding the path at zero against a positive drift has
# its own per-time price.
sp = SingleClassParams(lam=1.0, mu=1.0, sigma2=1.0, r=0.5)
tent = SampledPath(grid, np.minimum(grid.nodes, 1.0 - grid.nodes))
print("rate of the tent, reflected regime:",
      round(single_class_rate(tent, sp, regime="reflected"), 6))
flat = SampledPath(grid, np.zeros(grid.steps + 1))
print("rate of staying at zero vs drift r=0.5:",
      round(single_class_rate(flat, sp, regime="reflected"), 6),
      "= r^2 T / (2 (lam sigma2 + mu)) =", 0.5**2 / (2 * 2.0))
