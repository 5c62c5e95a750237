"""Moderate-deviation rate functionals for the arrival and service noise.

The action of a piecewise-linear path is computed by exact quadrature (its
derivative is piecewise constant).  Paths that leave the finite-action set
(nonzero start, or a nonzero component driven by a zero-variance arrival
stream) get value ``math.inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .paths import SampledPath

__all__ = [
    "ClassParams",
    "SingleClassParams",
    "action_arrivals",
    "action_services",
    "action_joint",
    "min_split_rate",
    "single_class_rate",
    "lambda_functional",
]

_RHO_TOL = 1e-12


@dataclass(frozen=True)
class ClassParams:
    """Limiting per-class rates of a critically loaded multi-class system.

    lam, mu: first-order arrival / service-capacity rates (positive).
    sigma2: inter-arrival variances (unit-mean families).
    lam_tilde, mu_tilde: second-order drifts.
    """

    lam: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    lam_tilde: np.ndarray | None = None
    mu_tilde: np.ndarray | None = None

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        s2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        lt = self.lam_tilde
        mt = self.mu_tilde
        lt = np.zeros_like(lam) if lt is None else np.atleast_1d(np.asarray(lt, float))
        mt = np.zeros_like(mu) if mt is None else np.atleast_1d(np.asarray(mt, float))
        if not (lam.shape == mu.shape == s2.shape == lt.shape == mt.shape):
            raise ValueError("parameter vectors must have equal length")
        if np.any(lam <= 0) or np.any(mu <= 0):
            raise ValueError("all lam, mu must be positive")
        if np.any(s2 < 0):
            raise ValueError("variances must be nonnegative")
        rho = lam / mu
        if abs(rho.sum() - 1.0) > _RHO_TOL * max(1.0, rho.sum()):
            raise ValueError(
                f"system must be critically loaded: sum(rho) = {rho.sum()!r}"
            )
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", s2)
        object.__setattr__(self, "lam_tilde", lt)
        object.__setattr__(self, "mu_tilde", mt)

    @property
    def num_classes(self) -> int:
        return len(self.lam)

    @property
    def rho(self) -> np.ndarray:
        return self.lam / self.mu

    @property
    def theta(self) -> np.ndarray:
        return 1.0 / self.mu

    @property
    def y(self) -> np.ndarray:
        return self.lam_tilde - self.rho * self.mu_tilde

    @property
    def diffusivity(self) -> np.ndarray:
        """Effective per-class diffusivity lam_i * (sigma2_i + 1)."""
        return self.lam * (self.sigma2 + 1.0)


@dataclass(frozen=True)
class SingleClassParams:
    """Parameters for the single-class system: lam = mu (critical load)."""

    lam: float
    mu: float
    sigma2: float
    r: float = 0.0

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0:
            raise ValueError("lam and mu must be positive")
        if abs(self.lam - self.mu) > _RHO_TOL * max(1.0, self.lam):
            raise ValueError("single-class system must be critically loaded (lam = mu)")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


def _weighted_action(psi: SampledPath, weights: np.ndarray) -> float:
    vals = psi.values
    if vals.shape[1] != len(weights):
        raise ValueError(
            f"dimension mismatch: path has {vals.shape[1]} components, "
            f"params have {len(weights)}"
        )
    if np.any(vals[0] != 0.0):
        return math.inf
    slopes = psi.slopes()
    total = 0.0
    for i, w in enumerate(weights):
        comp = slopes[:, i]
        if not np.isfinite(w):
            # zero-variance channel: only the zero component has finite action
            if np.any(psi.values[:, i] != 0.0):
                return math.inf
            continue
        total += 0.5 * w * float(np.sum(comp**2)) * psi.grid.dt
    return total


def action_arrivals(psi: SampledPath, params: ClassParams) -> float:
    """Arrival-noise action: (1/2) sum_i (1/(lam_i sigma2_i)) int dpsi_i^2."""
    denom = params.lam * params.sigma2
    weights = np.where(denom > 0, 1.0 / np.where(denom > 0, denom, 1.0), math.inf)
    return _weighted_action(psi, weights)


def action_services(psi: SampledPath, params: ClassParams) -> float:
    """Service-noise action: (1/2) sum_i (1/mu_i) int dpsi_i^2."""
    return _weighted_action(psi, 1.0 / params.mu)


def action_joint(psi1: SampledPath, psi2: SampledPath, params: ClassParams) -> float:
    """Joint action of the pair (arrival path, service path)."""
    return action_arrivals(psi1, params) + action_services(psi2, params)


def min_split_rate(mdot: float, a: float, b: float) -> tuple[float, float, float]:
    """Cheapest split of net rate mdot = u - v at cost u^2/(2a) + v^2/(2b).

    Closed form from Lagrange stationarity: the optimum allocates the net
    rate proportionally to the diffusivities.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    u = a * mdot / (a + b)
    v = -b * mdot / (a + b)
    return u, v, mdot**2 / (2.0 * (a + b))


def _neg_part_integral(v0: float, v1: float, dt: float) -> float:
    """Exact integral of max(-phi, 0) over one linear cell from v0 to v1."""
    if v0 >= 0 and v1 >= 0:
        return 0.0
    if v0 <= 0 and v1 <= 0:
        return -0.5 * (v0 + v1) * dt
    # one sign change inside the cell
    tc = dt * v0 / (v0 - v1)
    if v0 < 0:  # negative then positive
        return -0.5 * v0 * tc
    return -0.5 * v1 * (dt - tc)


def single_class_rate(
    target: SampledPath, params: SingleClassParams, regime: str
) -> float:
    """Moderate-deviation rate of a single-class customers-in-system path.

    regime "ode": the target is a solution of the drift-reflection ODE; the
    required net noise is m(t) = phi(t) - phi(0) - r t - mu * int (phi)^- and
    the rate is int mdot^2 / (2 (lam sigma2 + mu)).

    regime "reflected": the target lives under the Skorohod map; away from
    zero the cheapest preimage slope is phi' - r, while holding the path at
    zero costs ((r)^+)^2 / (2 (lam sigma2 + mu)) per unit time.  Segment
    classification happens at grid resolution.
    """
    if regime not in ("ode", "reflected"):
        raise ValueError(f"unknown regime {regime!r}")
    phi = target.scalar_values()
    dt = target.grid.dt
    denom = 2.0 * (params.lam * params.sigma2 + params.mu)
    if regime == "ode":
        neg_int = np.zeros(len(phi))
        for k in range(len(phi) - 1):
            neg_int[k + 1] = neg_int[k] + _neg_part_integral(phi[k], phi[k + 1], dt)
        t = target.grid.nodes
        m = phi - phi[0] - params.r * t - params.mu * neg_int
        mdot = np.diff(m) / dt
        return float(np.sum(mdot**2) * dt) / denom
    # reflected
    if np.any(phi < 0):
        raise ValueError("reflected regime requires a nonnegative target")
    tol = 1e-9 * (1.0 + float(np.max(np.abs(phi))))
    slopes = np.diff(phi) / dt
    total = 0.0
    for k, s in enumerate(slopes):
        at_zero = abs(phi[k]) <= tol and abs(phi[k + 1]) <= tol
        if at_zero:
            total += max(params.r, 0.0) ** 2 * dt / denom
        else:
            total += (s - params.r) ** 2 * dt / denom
    return total


def lambda_functional(psi: SampledPath) -> float:
    """Sum over components of the sup-norms sup_t |psi_i(t)|."""
    return float(np.sum(np.max(np.abs(psi.values), axis=0)))
