"""The limiting differential game: dynamics, minimizing strategy and value.

The value is computed through the explicit saddle: the minimizer's optimal
strategy reflects the workload at zero and rides the minimizing curve, which
turns the inf-sup into a single maximization over the maximizer's path.  The
maximization runs in reduced scalar workload coordinates; a full-dimensional
brute-force oracle exists for validation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .paths import SampledPath, TimeGrid, reflect_values
from .rate import ClassParams, action_joint

__all__ = [
    "CostFunctions",
    "MinCurve",
    "GameSpec",
    "Reduced1D",
    "time_change_R",
    "game_dynamics",
    "min_curve_linear",
    "min_curve_numeric",
    "strategy_zeta",
    "zeta_hat_discrete",
    "game_cost",
    "reduce_to_workload",
    "solve_value",
    "brute_force_value",
    "check_strategy_admissible",
    "AdmissibilityReport",
]


@dataclass(frozen=True)
class CostFunctions:
    """Nonnegative, nondecreasing running and terminal costs h, g.

    ``kind`` is "linear" (h = c.x, g = d.x) or "custom"; C1, C2 declare the
    linear growth bound h(x) + g(x) <= C1 ||x|| + C2.
    """

    h: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    c: np.ndarray | None = None
    d: np.ndarray | None = None
    C1: float = math.inf
    C2: float = 0.0

    @staticmethod
    def linear(c, d) -> "CostFunctions":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        d = np.atleast_1d(np.asarray(d, dtype=float))
        if np.any(c < 0) or np.any(d < 0):
            raise ValueError("linear cost coefficients must be nonnegative")

        def h(x):
            return np.asarray(x) @ c

        def g(x):
            return np.asarray(x) @ d

        C1 = float(np.linalg.norm(c) + np.linalg.norm(d))
        return CostFunctions(h=h, g=g, kind="linear", c=c, d=d, C1=C1, C2=0.0)


@dataclass
class MinCurve:
    """Continuous minimizing curve f on the workload level sets {theta.x = w}."""

    theta: np.ndarray
    kind: str  # "builtin-linear" or "tabulated"
    istar: int | None = None
    w_grid: np.ndarray | None = None
    f_values: np.ndarray | None = None
    h_star: Callable[[np.ndarray], np.ndarray] | None = None
    g_star: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, w):
        """Evaluate f: workload |-> cheapest state, vectorized over w."""
        w = np.asarray(w, dtype=float)
        out = np.zeros(w.shape + (len(self.theta),))
        if self.kind == "builtin-linear":
            out[..., self.istar] = w / self.theta[self.istar]
        else:
            for j in range(len(self.theta)):
                out[..., j] = np.interp(w, self.w_grid, self.f_values[:, j])
        return out


@dataclass
class GameSpec:
    """Initial state, horizon, costs and minimizing curve defining one game."""

    params: ClassParams
    x: np.ndarray
    T: float
    costs: CostFunctions
    curve: MinCurve

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if np.any(self.x < 0):
            raise ValueError("initial state must be nonnegative")
        if len(self.x) != self.params.num_classes:
            raise ValueError("initial state dimension mismatch")
        if not self.T > 0:
            raise ValueError("horizon must be positive")


@dataclass
class Reduced1D:
    """Scalar workload formulation: reflected drift plus one noise budget."""

    w0: float
    drift: float
    sigma_bar_sq: float
    h_star: Callable[[np.ndarray], np.ndarray]
    g_star: Callable[[np.ndarray], np.ndarray]


def time_change_R(psi: SampledPath, params: ClassParams) -> SampledPath:
    """Component-wise time change psi_i(rho_i t), resampled on the same grid."""
    rho = params.rho
    if psi.dim != len(rho):
        raise ValueError("dimension mismatch")
    nodes = psi.grid.nodes
    out = np.empty_like(psi.values)
    for i in range(psi.dim):
        out[:, i] = np.interp(rho[i] * nodes, nodes, psi.values[:, i])
    return SampledPath(psi.grid, out)


def game_dynamics(
    spec: GameSpec, psi1: SampledPath, psi2: SampledPath, zeta: SampledPath
) -> SampledPath:
    """phi_i(t) = x_i + y_i t + psi1_i(t) - R_i[psi2](t) + zeta_i(t)."""
    grid = psi1.grid
    t = grid.nodes[:, None]
    r2 = time_change_R(psi2, spec.params)
    phi = spec.x[None, :] + spec.params.y[None, :] * t + psi1.values - r2.values
    phi = phi + zeta.values
    return SampledPath(grid, phi)


def min_curve_linear(costs: CostFunctions, params: ClassParams) -> MinCurve:
    """Minimizing curve for linear costs under the priority ordering.

    Requires c_1 mu_1 >= ... >= c_I mu_I and the same ordering for d; the
    cheapest class is then the last one and f(w) = w mu_I e_I.
    """
    if costs.kind != "linear":
        raise ValueError("min_curve_linear needs linear costs")
    cmu = costs.c * params.mu
    dmu = costs.d * params.mu
    if np.any(np.diff(cmu) > 1e-12) or np.any(np.diff(dmu) > 1e-12):
        raise ValueError(
            "no common minimizing curve: cost-rate orderings must be nonincreasing"
        )
    istar = params.num_classes - 1
    mu_star = params.mu[istar]
    c_star = costs.c[istar] * mu_star
    d_star = costs.d[istar] * mu_star

    def h_star(w):
        return c_star * np.asarray(w, dtype=float)

    def g_star(w):
        return d_star * np.asarray(w, dtype=float)

    return MinCurve(
        theta=params.theta,
        kind="builtin-linear",
        istar=istar,
        h_star=h_star,
        g_star=g_star,
    )


def _constrained_min(fn, theta, w, n_starts=4):
    """Minimize fn over {x >= 0 : theta . x = w} (SLSQP, vertex multistart)."""
    I = len(theta)
    if w == 0.0:
        return np.zeros(I), float(fn(np.zeros(I)))
    best_x, best_v = None, math.inf
    starts = [np.full(I, w / theta.sum())]
    for j in range(min(I, n_starts)):
        v = np.zeros(I)
        v[j] = w / theta[j]
        starts.append(v)
    cons = {"type": "eq", "fun": lambda x: theta @ x - w}
    for x0 in starts:
        res = optimize.minimize(
            lambda x: float(fn(x)),
            x0,
            method="SLSQP",
            bounds=[(0, None)] * I,
            constraints=[cons],
            options={"maxiter": 200, "ftol": 1e-12},
        )
        if res.success and res.fun < best_v:
            best_x, best_v = res.x, float(res.fun)
    if best_x is None:
        raise RuntimeError("constrained minimization failed")
    return best_x, best_v


def min_curve_numeric(
    costs: CostFunctions, params: ClassParams, w_grid, rel_tol: float = 1e-6
) -> MinCurve:
    """Tabulate the minimizing curve for custom costs on a workload grid.

    Fails if h and g do not attain their constrained minima at a common
    point (within ``rel_tol`` on the g values).
    """
    w_grid = np.asarray(w_grid, dtype=float)
    if w_grid[0] != 0 or np.any(np.diff(w_grid) <= 0):
        raise ValueError("w_grid must be increasing and start at 0")
    theta = params.theta
    fvals = np.empty((len(w_grid), params.num_classes))
    hstars = np.empty(len(w_grid))
    gstars = np.empty(len(w_grid))
    for k, w in enumerate(w_grid):
        xh, hmin = _constrained_min(costs.h, theta, w)
        _, gmin = _constrained_min(costs.g, theta, w)
        g_at_xh = float(costs.g(xh))
        if g_at_xh - gmin > rel_tol * (1.0 + abs(gmin)):
            raise ValueError(
                "Condition violated for supplied costs: h- and g-minimizers "
                f"differ at w={w:g} (g at h-minimizer {g_at_xh:g} vs {gmin:g})"
            )
        fvals[k] = xh
        hstars[k] = hmin
        gstars[k] = g_at_xh

    def h_star(w):
        return np.interp(np.asarray(w, dtype=float), w_grid, hstars)

    def g_star(w):
        return np.interp(np.asarray(w, dtype=float), w_grid, gstars)

    return MinCurve(
        theta=theta,
        kind="tabulated",
        w_grid=w_grid,
        f_values=fvals,
        h_star=h_star,
        g_star=g_star,
    )


def strategy_zeta(
    spec: GameSpec, psi1: SampledPath, psi2: SampledPath
) -> tuple[SampledPath, SampledPath]:
    """The reflect-and-ride-the-curve strategy and its dynamics.

    psihat = x + y t + psi1 - R[psi2]; the control is
    zeta = f(Gamma[theta . psihat]) - psihat and the resulting state is
    phi = f(Gamma[theta . psihat]) >= 0.
    """
    grid = psi1.grid
    t = grid.nodes[:, None]
    r2 = time_change_R(psi2, spec.params)
    psihat = spec.x[None, :] + spec.params.y[None, :] * t + psi1.values - r2.values
    w = psihat @ spec.params.theta
    gamma = reflect_values(w)
    phi = spec.curve(gamma)
    zeta = phi - psihat
    return SampledPath(grid, zeta), SampledPath(grid, phi)


def zeta_hat_discrete(
    curve: MinCurve,
    x: np.ndarray,
    sample_times: np.ndarray,
    psihat_samples: np.ndarray,
    eval_idx: np.ndarray,
) -> np.ndarray:
    """Evaluate the strategy on discretely sampled free dynamics.

    ``psihat_samples`` (len(sample_times), I) holds psihat at an increasing
    sequence of candidate times (event times with pre/post values plus any
    evaluation times); the reflection term is the running maximum of the
    negative part of theta . psihat over the samples.  Returns zeta at the
    rows selected by ``eval_idx``.
    """
    w = psihat_samples @ curve.theta
    gamma = reflect_values(w)
    phi = curve(gamma)
    zeta = phi - psihat_samples
    return zeta[eval_idx]


def game_cost(
    spec: GameSpec, psi1: SampledPath, psi2: SampledPath, zeta: SampledPath
) -> float:
    """c(psi, zeta) = int h(phi) + g(phi(T)) - action of (psi1, psi2)."""
    phi = game_dynamics(spec, psi1, psi2, zeta)
    hvals = spec.costs.h(phi.values)
    running = float(np.trapezoid(hvals, dx=phi.grid.dt))
    terminal = float(spec.costs.g(phi.values[-1]))
    return running + terminal - action_joint(psi1, psi2, spec.params)


def reduce_to_workload(spec: GameSpec) -> Reduced1D:
    """Collapse the game to scalar workload coordinates.

    Time-changing the service noise by rho_i turns its weight into 1/lam_i;
    the optimal arrival/service split of net per-class flow yields the
    diffusivity a_i = lam_i (sigma2_i + 1), and the optimal allocation of a
    workload increment across classes costs sdot^2 / (2 sigma_bar_sq) with
    sigma_bar_sq = sum theta_i^2 a_i.
    """
    p = spec.params
    sigma_bar_sq = float(np.sum(p.theta**2 * p.diffusivity))
    return Reduced1D(
        w0=float(p.theta @ spec.x),
        drift=float(p.theta @ p.y),
        sigma_bar_sq=sigma_bar_sq,
        h_star=spec.curve.h_star,
        g_star=spec.curve.g_star,
    )


def _reduced_objective_batch(red: Reduced1D, grid: TimeGrid, s_nodes: np.ndarray):
    """Objective for a batch of scalar workload-noise paths (rows = paths)."""
    t = grid.nodes
    w = red.w0 + red.drift * t[None, :] + s_nodes
    gamma = reflect_values(w)
    h = red.h_star(gamma)
    running = np.trapezoid(h, dx=grid.dt, axis=-1)
    terminal = red.g_star(gamma[:, -1])
    ds = np.diff(s_nodes, axis=-1)
    action = np.sum(ds**2, axis=-1) / (2.0 * red.sigma_bar_sq * grid.dt)
    return running + terminal - action


def solve_value(
    spec: GameSpec,
    K: int = 200,
    restarts: int = 8,
    steps: int = 500,
    step_scale: float | None = None,
    fd_step: float = 1e-6,
    seed: int = 0,
) -> tuple[float, SampledPath]:
    """Maximize the reduced workload objective by projected gradient ascent.

    Multi-start (zero path, linear ramps, random paths) with a diminishing
    step c/sqrt(iter); the reflection term is differentiated by forward
    finite differences, the quadratic action analytically.  The returned
    value is a lower bound on the true discretized supremum.
    """
    if K < 16:
        raise ValueError("K must be at least 16")
    red = reduce_to_workload(spec)
    grid = TimeGrid(spec.T, K)
    dt = grid.dt
    rng = np.random.default_rng(seed)
    if step_scale is None:
        # the action Hessian is diagonal 1/(sigma_bar_sq dt) in increments
        step_scale = red.sigma_bar_sq * dt

    def reward_batch(s_nodes):
        t = grid.nodes
        w = red.w0 + red.drift * t[None, :] + s_nodes
        gamma = reflect_values(w)
        running = np.trapezoid(red.h_star(gamma), dx=dt, axis=-1)
        return running + red.g_star(gamma[:, -1])

    def objective(ds):
        s = np.concatenate([[0.0], np.cumsum(ds)])
        val = _reduced_objective_batch(red, grid, s[None, :])[0]
        if not np.isfinite(val):
            raise ArithmeticError(
                "non-finite game objective: cost growth exceeds declared bounds"
            )
        return val

    ramps = [red.sigma_bar_sq * spec.T, 2.0, 0.5]
    starts = [np.zeros(K)]
    starts += [np.full(K, r * dt) for r in ramps[: max(0, restarts - 1)]]
    while len(starts) < restarts:
        starts.append(rng.normal(scale=math.sqrt(dt), size=K))

    best_val, best_ds = -math.inf, np.zeros(K)
    for ds0 in starts:
        ds = ds0.copy()
        for it in range(1, steps + 1):
            s = np.concatenate([[0.0], np.cumsum(ds)])
            eps = fd_step * (1.0 + float(np.max(np.abs(s))))
            base = reward_batch(s[None, :])[0]
            # forward differences of the reward through the reflection map:
            # bumping increment k shifts all nodes >= k+1 by eps
            pert = np.repeat(s[None, :], K, axis=0)
            for k in range(K):
                pert[k, k + 1 :] += eps
            grad = (reward_batch(pert) - base) / eps
            grad -= ds / (red.sigma_bar_sq * dt)
            ds = ds + (step_scale / math.sqrt(it)) * grad
        val = objective(ds)
        if val > best_val:
            best_val, best_ds = val, ds
    s_best = np.concatenate([[0.0], np.cumsum(best_ds)])
    return best_val, SampledPath(grid, s_best)


def brute_force_value(
    spec: GameSpec, K: int = 8, restarts: int = 12, seed: int = 0
) -> float:
    """Oracle value: optimize all 2I path increments of (psi1, psi2) directly.

    Composes the minimizing strategy with the full cost and maximizes with a
    quasi-Newton method over the coarse grid; for validation only.
    """
    if K > 8:
        raise ValueError("brute-force oracle is meant for coarse grids (K <= 8)")
    I = spec.params.num_classes
    grid = TimeGrid(spec.T, K)
    rng = np.random.default_rng(seed)

    def unpack(z):
        inc = z.reshape(2 * I, K)
        v1 = np.concatenate([np.zeros((1, I)), np.cumsum(inc[:I].T, axis=0)])
        v2 = np.concatenate([np.zeros((1, I)), np.cumsum(inc[I:].T, axis=0)])
        return SampledPath(grid, v1), SampledPath(grid, v2)

    def neg_cost(z):
        psi1, psi2 = unpack(z)
        zeta, _ = strategy_zeta(spec, psi1, psi2)
        return -game_cost(spec, psi1, psi2, zeta)

    best = -math.inf
    z0s = [np.zeros(2 * I * K)]
    while len(z0s) < restarts:
        z0s.append(rng.normal(scale=0.5 * math.sqrt(grid.dt), size=2 * I * K))
    for z0 in z0s:
        res = optimize.minimize(neg_cost, z0, method="L-BFGS-B")
        best = max(best, -float(res.fun))
    return best


@dataclass
class AdmissibilityReport:
    trials: int
    causality_ok: bool
    nonnegative_ok: bool
    monotone_ok: bool
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.causality_ok and self.nonnegative_ok and self.monotone_ok


def check_strategy_admissible(
    strategy,
    spec: GameSpec,
    trial_paths: list[tuple[SampledPath, SampledPath]],
    phi_tol: float = 1e-9,
    mono_tol: float = 1e-12,
) -> AdmissibilityReport:
    """Exercise causality, state nonnegativity and control monotonicity.

    ``strategy`` maps (psi1, psi2) to zeta.  For each trial the inputs are
    mutated strictly after a cut node and the control must be unchanged up
    to the cut; the dynamics must stay >= -phi_tol; theta . zeta must be
    nondecreasing from zero within mono_tol.
    """
    rng = np.random.default_rng(1234)
    rep = AdmissibilityReport(len(trial_paths), True, True, True)
    theta = spec.params.theta
    for idx, (psi1, psi2) in enumerate(trial_paths):
        zeta = strategy(psi1, psi2)
        K = psi1.grid.steps
        cut = int(rng.integers(1, K))
        m1 = psi1.values.copy()
        m2 = psi2.values.copy()
        m1[cut + 1 :] += rng.normal(size=m1[cut + 1 :].shape)
        m2[cut + 1 :] += rng.normal(size=m2[cut + 1 :].shape)
        zeta_mut = strategy(SampledPath(psi1.grid, m1), SampledPath(psi2.grid, m2))
        # the time change only slows the service clock (rho <= 1), so a
        # mutation strictly after the cut cannot reach nodes up to the cut
        if not np.array_equal(zeta.values[: cut + 1], zeta_mut.values[: cut + 1]):
            rep.causality_ok = False
            rep.failures.append((idx, "causality"))
        phi = game_dynamics(spec, psi1, psi2, zeta)
        if np.min(phi.values) < -phi_tol:
            rep.nonnegative_ok = False
            rep.failures.append((idx, "nonnegativity"))
        tz = zeta.values @ theta
        if abs(tz[0]) > mono_tol or np.any(np.diff(tz) < -mono_tol):
            rep.monotone_ok = False
            rep.failures.append((idx, "monotone"))
    return rep
