"""Moderate-deviation analysis of many-server queues.

Reflection maps and scaled path containers (:mod:`mdqueue.paths`), action
functionals (:mod:`mdqueue.rate`), the risk-sensitive workload game and its
solver (:mod:`mdqueue.game`), an exact event-driven simulator
(:mod:`mdqueue.sim`) with compiled single-class kernels
(:mod:`mdqueue.fastsim`), scheduling policies (:mod:`mdqueue.policies`),
and Monte-Carlo cost estimation (:mod:`mdqueue.riskcost`).
"""

from .game import (
    CostFunctions,
    GameSpec,
    MinCurve,
    min_curve_linear,
    min_curve_numeric,
    reduce_to_workload,
    solve_value,
)
from .paths import SampledPath, StepPath, TimeGrid, drift_reflect_ode, skorokhod_reflect
from .policies import PolicySpec, TrackingConfig, make_policy
from .rate import ClassParams, SingleClassParams, min_split_rate, single_class_rate
from .riskcost import CostEstimate, convergence_sweep, estimate_cost, log_mean_exp
from .sim import InterArrivalFamily, ScalingScheme, build_scaling, payoff, simulate

__version__ = "0.1.0"

__all__ = [
    "TimeGrid", "SampledPath", "StepPath", "skorokhod_reflect",
    "drift_reflect_ode", "ClassParams", "SingleClassParams",
    "min_split_rate", "single_class_rate", "CostFunctions", "GameSpec",
    "MinCurve", "min_curve_linear", "min_curve_numeric",
    "reduce_to_workload", "solve_value", "InterArrivalFamily",
    "ScalingScheme", "build_scaling", "simulate", "payoff", "PolicySpec",
    "TrackingConfig", "make_policy", "CostEstimate", "estimate_cost",
    "convergence_sweep", "log_mean_exp",
]
