"""Path containers, the one-dimensional reflection map and path functionals.

Continuous paths are piecewise linear on a uniform grid; simulation traces
live on exact event times as right-continuous step paths.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeGrid",
    "SampledPath",
    "StepPath",
    "skorokhod_reflect",
    "drift_reflect_ode",
    "oscillation",
    "sup_norm",
    "sup_norm_to",
    "path_to_csv",
    "path_from_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_K = T."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.steps) < 1 or self.steps != int(self.steps):
            raise ValueError("steps must be an integer >= 1")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass
class SampledPath:
    """Piecewise-linear path: values at the grid nodes, one column per component.

    ``values`` has shape (K+1, d).  Evaluation anywhere in [0, T] is the
    linear interpolant; the derivative is constant on each cell.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"values must have {self.grid.steps + 1} rows, got {v.shape[0]}"
            )
        self.values = v

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def is_scalar(self) -> bool:
        return self.dim == 1

    def scalar_values(self) -> np.ndarray:
        if not self.is_scalar:
            raise ValueError("path is not scalar")
        return self.values[:, 0]

    def __call__(self, t):
        """Linear interpolation; t may be a scalar or an array."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.dim,))
        nodes = self.grid.nodes
        for j in range(self.dim):
            out[..., j] = np.interp(t, nodes, self.values[:, j])
        return out

    def slopes(self) -> np.ndarray:
        """Per-cell derivative, shape (K, d)."""
        return np.diff(self.values, axis=0) / self.grid.dt

    def map(self, fn) -> "SampledPath":
        return SampledPath(self.grid, fn(self.values))

    @staticmethod
    def from_function(grid: TimeGrid, fn) -> "SampledPath":
        vals = np.asarray([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float)
        return SampledPath(grid, vals)

    @staticmethod
    def zero(grid: TimeGrid, dim: int = 1) -> "SampledPath":
        return SampledPath(grid, np.zeros((grid.steps + 1, dim)))


@dataclass
class StepPath:
    """Right-continuous piecewise-constant scalar path with left limits."""

    initial: float
    jump_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    jump_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.jump_times = np.asarray(self.jump_times, dtype=float)
        self.jump_values = np.asarray(self.jump_values, dtype=float)
        if self.jump_times.shape != self.jump_values.shape:
            raise ValueError("jump_times and jump_values must have equal length")
        if self.jump_times.size and np.any(np.diff(self.jump_times) < 0):
            raise ValueError("jump times must be nondecreasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side="right")
        vals = np.concatenate(([self.initial], self.jump_values))
        return vals[idx]

    def all_values(self) -> np.ndarray:
        return np.concatenate(([self.initial], self.jump_values))


def _as_scalar_values(path):
    if isinstance(path, SampledPath):
        return path.scalar_values()
    if isinstance(path, StepPath):
        return path.all_values()
    raise TypeError(f"unsupported path type {type(path)!r}")


def skorokhod_reflect(psi):
    """One-sided reflection at zero: psi(t) + sup_{s<=t} (psi(s))^-.

    Accepts a scalar SampledPath or StepPath with nonnegative initial value
    and returns a path of the same kind.  For piecewise-linear input the
    running supremum of the negative part is attained at nodes, so the
    node-wise evaluation is exact there.
    """
    v = _as_scalar_values(psi)
    if v[0] < 0:
        raise ValueError("skorokhod_reflect requires psi(0) >= 0")
    pushing = np.maximum.accumulate(np.maximum(-v, 0.0))
    out = v + pushing
    if isinstance(psi, SampledPath):
        return SampledPath(psi.grid, out)
    return StepPath(out[0], psi.jump_times, out[1:])


def reflect_values(v: np.ndarray) -> np.ndarray:
    """Node-wise reflection of an array of path values (last axis = time)."""
    pushing = np.maximum.accumulate(np.maximum(-v, 0.0), axis=-1)
    return v + pushing


def drift_reflect_ode(
    x0: float,
    y: float,
    kappa: float,
    psi1: SampledPath,
    psi2: SampledPath,
    substep_cap: float = 0.1,
) -> SampledPath:
    """Solve xi(t) = x0 + y t + psi1(t) - psi2(t) + kappa * int_0^t (xi)^- ds.

    Integrates cell by cell with Heun's rule, sub-stepped so that
    kappa * step <= ``substep_cap``.  The right-hand side s -> kappa * s^- is
    globally Lipschitz with constant kappa, which keeps the scheme stable.
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if psi1.grid != psi2.grid:
        raise ValueError("psi1 and psi2 must share a grid")
    if abs(psi1.scalar_values()[0]) > 0 or abs(psi2.scalar_values()[0]) > 0:
        raise ValueError("psi1(0) and psi2(0) must vanish")
    grid = psi1.grid
    dt = grid.dt
    base_slope = y + (psi1.slopes()[:, 0] - psi2.slopes()[:, 0])
    m = max(1, int(np.ceil(kappa * dt / substep_cap))) if kappa > 0 else 1
    h = dt / m
    out = np.empty(grid.steps + 1)
    out[0] = xi = float(x0)
    for k in range(grid.steps):
        s = base_slope[k]
        for _ in range(m):
            f0 = s + kappa * max(-xi, 0.0)
            xi_pred = xi + h * f0
            f1 = s + kappa * max(-xi_pred, 0.0)
            xi = xi + 0.5 * h * (f0 + f1)
        out[k + 1] = xi
    return SampledPath(grid, out)


def sup_norm(path) -> float:
    """sup over [0, T] of the Euclidean norm of the path value."""
    if isinstance(path, SampledPath):
        return float(np.max(np.linalg.norm(path.values, axis=1)))
    return float(np.max(np.abs(_as_scalar_values(path))))


def sup_norm_to(path, t: float) -> float:
    """sup over [0, t]; exact for piecewise-linear paths (t is inserted as a node)."""
    if isinstance(path, StepPath):
        vals = np.concatenate(([path.initial], path.jump_values[path.jump_times <= t]))
        return float(np.max(np.abs(vals)))
    nodes = path.grid.nodes
    if t < 0 or t > path.grid.horizon + 1e-12:
        raise ValueError("t outside [0, T]")
    mask = nodes <= t
    pts = np.linalg.norm(path.values[mask], axis=1)
    best = float(np.max(pts)) if mask.any() else 0.0
    return max(best, float(np.linalg.norm(path(t))))


def oscillation(path: SampledPath, eta: float) -> float:
    """eta-oscillation sup{ ||phi(s) - phi(t)|| : |s - t| <= eta }.

    Exact for piecewise-linear paths: the maximum is attained with both
    window endpoints in the node set augmented by node +- eta.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    T = path.grid.horizon
    if eta > T + 1e-12:
        raise ValueError("eta must not exceed the horizon")
    nodes = path.grid.nodes
    cand = np.concatenate([nodes, nodes - eta, nodes + eta])
    cand = np.unique(np.clip(cand, 0.0, T))
    vals = path(cand)
    best = 0.0
    for a in range(len(cand)):
        close = np.abs(cand - cand[a]) <= eta + 1e-12
        diffs = np.linalg.norm(vals[close] - vals[a], axis=1)
        best = max(best, float(np.max(diffs)))
    return best


def path_to_csv(path: SampledPath, dest) -> None:
    """Write a path as CSV with header t,v1..vd (one row per node)."""
    header = "t," + ",".join(f"v{j + 1}" for j in range(path.dim))
    data = np.column_stack([path.grid.nodes, path.values])
    if hasattr(dest, "write"):
        np.savetxt(dest, data, delimiter=",", header=header, comments="")
    else:
        with open(dest, "w") as fh:
            np.savetxt(fh, data, delimiter=",", header=header, comments="")


def path_from_csv(src) -> SampledPath:
    """Read a path written by :func:`path_to_csv`; the grid must be uniform."""
    if hasattr(src, "read"):
        text = src.read()
    else:
        with open(src) as fh:
            text = fh.read()
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty path file")
    header = lines[0].split(",")
    if header[0].strip() != "t" or len(header) < 2:
        raise ValueError("malformed path CSV: expected header t,v1..vd")
    try:
        data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValueError(f"malformed path CSV: {exc}") from exc
    if data.shape[0] < 2 or data.shape[1] != len(header):
        raise ValueError("malformed path CSV: wrong column count or too few rows")
    t = data[:, 0]
    steps = len(t) - 1
    if t[0] != 0 or not np.allclose(np.diff(t), t[-1] / steps, rtol=1e-9, atol=1e-12):
        raise ValueError("path CSV must carry a uniform grid starting at 0")
    return SampledPath(TimeGrid(float(t[-1]), steps), data[:, 1:])
