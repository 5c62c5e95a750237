"""Allocation policies: static priorities and the curve-tracking schedule.

The priority rule serves classes in order of cost-rate product and is work
conserving.  The tracking policy instead chases the game-optimal state: it
divides the horizon into macro blocks, estimates the opponent's strategy
from the observed deviation at block boundaries, and converts the corrected
fractions into a fine-grained duty cycle of single-class service slots.
"""
import numpy as np

from mdqueue.game import CostFunctions, min_curve_linear
from mdqueue.policies import TrackingConfig, TrackingPolicy, cmu_priority
from mdqueue.rate import ClassParams
from mdqueue.sim import InterArrivalFamily, build_scaling, simulate

# Priority allocation with 5 servers: class 1 first, remainder to class 2.
print("X=(3,4), N=5 ->", cmu_priority(np.array([3, 4]), 5))
print("X=(7,2), N=5 ->", cmu_priority(np.array([7, 2]), 5))

params = ClassParams(
    lam=np.array([0.5, 0.5]), mu=np.array([1.0, 1.0]),
    sigma2=np.array([1.0, 1.0]),
    lam_tilde=np.zeros(2), mu_tilde=np.zeros(2),
)
costs = CostFunctions.linear([2.0, 1.0], [0.0, 0.0])
policy = TrackingPolicy(params, min_curve_linear(costs, params),
                        TrackingConfig(v=0.25))
scheme = build_scaling(params, n=400)
policy.reset(scheme, np.array([36, 27]), T=1.0)
print(f"\nblocks: {policy.L + 1} of width {policy.vt:.3f}; "
      f"{policy.H + 1} service slots of {policy.delta:.5f} each")
print("block 0 fractions (off-curve correction):",
      np.round(policy.fractions[0], 4))
print("block 1 fractions (stationary split):  ",
      np.round(policy.fractions[1], 4))

# Under the engine the later fractions respond to the observed deviations;
# the audit rows expose one line per block.
fams = [InterArrivalFamily("exponential")] * 2
trace = simulate(scheme, fams, policy, T=1.0, seed=5,
                 x0_scaled=np.array([0.3, 0.2]))
trace.verify()
print("\nblock audit (block, start, block width, slot width, fractions...):")
for row in policy.audit_rows():
    print("  ", np.round(np.asarray(row, dtype=float), 4))
