"""Admissible scheduling policies for the prelimit system.

A policy object exposes ``reset(scheme, X0, T)``, ``allocate(t, X, stats)``
returning an integer allocation, and ``next_trigger(t)`` returning the next
deterministic reallocation time strictly after t (or inf).  ``stats`` is the
exact triple (A, D, alloc_integral) at the call time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .game import MinCurve
from .rate import ClassParams

__all__ = [
    "cmu_priority",
    "nonidling_single",
    "TrackingConfig",
    "PolicySpec",
    "CmuPolicy",
    "ZeroPolicy",
    "NonIdlingSinglePolicy",
    "TrackingPolicy",
    "make_policy",
]


def cmu_priority(X: np.ndarray, N: int) -> np.ndarray:
    """Static priority allocation, highest priority first.

    B_1 = X_1 ^ N, B_2 = X_2 ^ (N - B_1), ...; class labels are assumed
    pre-sorted so c_1 mu_1 >= ... >= c_I mu_I.  Work-conserving.
    """
    X = np.asarray(X, dtype=np.int64)
    B = np.zeros_like(X)
    free = int(N)
    for i in range(len(X)):
        B[i] = min(int(X[i]), free)
        free -= B[i]
    return B


def nonidling_single(X: int, N: int) -> int:
    """Single-class non-idling allocation Z = X ^ N."""
    return min(int(X), int(N))


class ZeroPolicy:
    """Serve nobody; trivially admissible."""

    def reset(self, scheme, X0, T):
        self._I = scheme.params.num_classes

    def allocate(self, t, X, stats):
        return np.zeros(self._I, dtype=np.int64)

    def next_trigger(self, t):
        return math.inf


class NonIdlingSinglePolicy:
    """Single-class work-conserving allocation."""

    def reset(self, scheme, X0, T):
        if scheme.params.num_classes != 1:
            raise ValueError("non-idling single-class policy requires I = 1")
        self._N = scheme.N_n

    def allocate(self, t, X, stats):
        return np.array([nonidling_single(X[0], self._N)], dtype=np.int64)

    def next_trigger(self, t):
        return math.inf


class CmuPolicy:
    """Priority rule ordered by cost rate times service rate.

    ``order`` lists class indices from highest to lowest priority; defaults
    to the natural ordering (labels pre-sorted by c_i mu_i).
    """

    def __init__(self, order=None):
        self.order = order

    def reset(self, scheme, X0, T):
        self._N = scheme.N_n
        I = scheme.params.num_classes
        self._order = np.arange(I) if self.order is None else np.asarray(self.order)
        if sorted(self._order.tolist()) != list(range(I)):
            raise ValueError("cmu order must be a permutation of the classes")

    def allocate(self, t, X, stats):
        Xp = np.asarray(X, dtype=np.int64)[self._order]
        Bp = cmu_priority(Xp, self._N)
        B = np.zeros_like(Bp)
        B[self._order] = Bp
        return B

    def next_trigger(self, t):
        return math.inf


@dataclass
class TrackingConfig:
    """Tuning knobs of the upper-bound tracking policy.

    Delta is the noise-action budget defining the norm cap M; v the macro
    interval length; alpha_n the micro scale (default
    b_n / (sqrt(n) log(n+1))).  The proof picks v from compactness
    arguments; here it is exposed as a tuning parameter.
    """

    Delta: float = 4.0
    v: float | None = None
    alpha_n: float | None = None


@dataclass
class PolicySpec:
    """Declarative policy selection: cmu | tracking | zero | nonidling-single."""

    kind: str
    order: list | None = None
    tracking: TrackingConfig | None = None
    params: ClassParams | None = None
    curve: MinCurve | None = None

    def __post_init__(self):
        kinds = ("cmu", "tracking", "zero", "nonidling-single")
        if self.kind not in kinds:
            raise ValueError(f"policy kind must be one of {kinds}")
        if self.kind == "tracking" and (self.params is None or self.curve is None):
            raise ValueError("tracking policy needs limit params and a MinCurve")


def make_policy(spec: PolicySpec):
    if spec.kind == "cmu":
        return CmuPolicy(spec.order)
    if spec.kind == "zero":
        return ZeroPolicy()
    if spec.kind == "nonidling-single":
        return NonIdlingSinglePolicy()
    cfg = spec.tracking or TrackingConfig()
    return TrackingPolicy(spec.params, spec.curve, cfg)


class TrackingPolicy:
    """Serve one class at a time in rotating slots that track the strategy.

    Each macro block of length v~ is split into micro intervals of length
    delta_n; within a micro interval class i gets the slot fraction gamma_i
    (block 0, correcting the off-curve start), rho_i (block 1), or
    beta_i(block) computed from the observed scaled arrival/departure pair
    evaluated through the minimizing strategy at the previous two macro
    boundaries.  Decisions for block l use data through the boundary a^(l-1)
    only.
    """

    def __init__(self, params: ClassParams, curve: MinCurve, config: TrackingConfig):
        self.params = params
        self.curve = curve
        self.config = config

    # -- grid construction -------------------------------------------------

    def reset(self, scheme, X0, T):
        p = self.params
        self.scheme = scheme
        self.T = float(T)
        self.I = p.num_classes
        self.N = scheme.N_n
        sc = scheme.scale
        self.x = (np.asarray(X0, dtype=float) - p.rho * scheme.N_n) / sc
        v = self.config.v if self.config.v is not None else self.T / 4.0
        if not 0 < v <= self.T:
            raise ValueError("macro interval v must lie in (0, T]")
        self.L = int(math.floor(self.T / v))
        self.vt = self.T / (self.L + 1)  # macro block length v~
        alpha = self.config.alpha_n
        if alpha is None:
            alpha = scheme.b_n / (math.sqrt(scheme.n) * math.log(scheme.n + 1.0))
        self.H = max(2, int(math.floor(self.vt / alpha)))
        self.delta = self.vt / (self.H + 1)
        D = self.config.Delta
        self.M = float(
            np.sum(np.sqrt(2.0 * p.diffusivity * D * self.T))
            + np.sum(np.sqrt(2.0 * p.mu * D * self.T))
        )
        # off-curve correction at time zero
        self.ell = self.curve(float(p.theta @ self.x)) - self.x
        coef = scheme.b_n / (p.mu * math.sqrt(scheme.n))
        raw = p.rho - coef * self.ell / self.vt
        if np.sum(np.maximum(raw, 0.0)) <= 1.0:
            gamma = np.maximum(raw, 0.0)
        else:
            gamma = p.rho.copy()
        self.fractions = [None] * (self.L + 1)
        self.fractions[0] = gamma
        if self.L >= 1:
            self.fractions[1] = p.rho.copy()
        # observation state for the scaled pair P_n = (A~, D~)
        self.prev_t = 0.0
        self.prev_A = np.zeros(self.I)
        self.prev_D = np.zeros(self.I)
        self.prev_Tc = np.zeros(self.I)
        w0 = float(p.theta @ self.x)
        self.run_min_w = w0
        self.run_max_P = 0.0
        n_bound = self.L + 2
        self.zeta_at = np.full((n_bound, self.I), np.nan)
        self.Pnorm_at = np.full(n_bound, np.nan)
        self.zeta_at[0] = self._zeta_from(self.x.copy(), w0)
        self.Pnorm_at[0] = 0.0
        self.recorded = 1
        self.beta_history = []

    # -- observation of the scaled pair ------------------------------------

    def _scaled_pair(self, tau, A, D, Tc):
        sc = self.scheme.scale
        At = (A - self.scheme.lam_n * tau) / sc
        Dt = (D - self.scheme.mu_n * Tc) / sc
        return At, Dt

    def _psihat(self, tau, At, Dt):
        return self.x + self.params.y * tau + At - Dt

    def _zeta_from(self, psihat, w_now):
        gamma = w_now + max(0.0, -min(0.0, self.run_min_w))
        return self.curve(gamma) - psihat

    def _interp_Tc(self, tau, t, Tc):
        if t <= self.prev_t:
            return self.prev_Tc
        frac = (tau - self.prev_t) / (t - self.prev_t)
        return self.prev_Tc + frac * (Tc - self.prev_Tc)

    def _observe(self, t, A, D, Tc):
        """Fold the step from prev_t to t into the running extrema.

        Counts were constant on (prev_t, t); the compensators are linear, so
        the extrema on the interval are attained at its endpoints (pre-jump
        at t) and at the post-jump values.
        """
        theta = self.params.theta
        # record any macro boundaries passed since the previous call
        while self.recorded <= self.L + 1 and self._a(self.recorded) <= t + 1e-12:
            a = min(self._a(self.recorded), t)
            Tc_a = self._interp_Tc(a, t, Tc)
            At, Dt = self._scaled_pair(a, self.prev_A, self.prev_D, Tc_a)
            psihat = self._psihat(a, At, Dt)
            w = float(theta @ psihat)
            self.run_min_w = min(self.run_min_w, w)
            self.run_max_P = max(
                self.run_max_P, math.hypot(np.linalg.norm(At), np.linalg.norm(Dt))
            )
            self.zeta_at[self.recorded] = self._zeta_from(psihat, w)
            self.Pnorm_at[self.recorded] = self.run_max_P
            self.recorded += 1
        # pre-jump value at t, then post-jump value
        for counts in ((self.prev_A, self.prev_D), (A, D)):
            At, Dt = self._scaled_pair(t, counts[0], counts[1], Tc)
            psihat = self._psihat(t, At, Dt)
            self.run_min_w = min(self.run_min_w, float(theta @ psihat))
            self.run_max_P = max(
                self.run_max_P, math.hypot(np.linalg.norm(At), np.linalg.norm(Dt))
            )
        self.prev_t = t
        self.prev_A = np.asarray(A, dtype=float)
        self.prev_D = np.asarray(D, dtype=float)
        self.prev_Tc = np.asarray(Tc, dtype=float)

    # -- slot machinery -----------------------------------------------------

    def _a(self, ell):
        return ell * self.vt

    def _ensure_fractions(self, ell):
        if self.fractions[ell] is not None:
            return
        p = self.params
        if np.isnan(self.zeta_at[ell - 1]).any() or np.isnan(self.zeta_at[ell - 2]).any():
            raise RuntimeError("macro boundary data missing; engine skipped a trigger")
        coef = self.scheme.b_n / (p.mu * math.sqrt(self.scheme.n))
        F = coef * (self.zeta_at[ell - 1] - self.zeta_at[ell - 2]) / self.vt
        raw = p.rho - F
        capped = (
            np.sum(np.maximum(raw, 0.0)) > 1.0
            or self.Pnorm_at[ell - 1] >= self.M + 2.0
        )
        beta = p.rho.copy() if capped else np.maximum(raw, 0.0)
        self.fractions[ell] = beta
        self.beta_history.append((ell, beta.copy(), bool(capped)))

    def _locate(self, t):
        ell = min(int(math.floor(t / self.vt + 1e-9)), self.L)
        rel = t - self._a(ell)
        j = min(int(math.floor(rel / self.delta + 1e-9)), self.H)
        off = t - (self._a(ell) + j * self.delta)
        return ell, j, off

    def allocate(self, t, X, stats):
        A, D, Tc = stats
        self._observe(t, np.asarray(A, float), np.asarray(D, float),
                      np.asarray(Tc, float))
        ell, j, off = self._locate(t)
        if ell >= 2:
            self._ensure_fractions(ell)
        frac = self.fractions[ell]
        cums = self.delta * np.cumsum(frac)
        B = np.zeros(self.I, dtype=np.int64)
        idx = int(np.searchsorted(cums, off + 1e-15, side="right"))
        if idx < self.I:
            B[idx] = min(self.N, int(X[idx]))
        return B

    def next_trigger(self, t):
        ell, j, off = self._locate(t)
        frac = self.fractions[ell]
        base = self._a(ell) + j * self.delta
        cands = [base + c for c in (self.delta * np.cumsum(frac))]
        cands.append(base + self.delta)
        cands.append(self._a(ell + 1))
        tol = 1e-12 * max(1.0, self.T)
        future = [c for c in cands if c > t + tol]
        return min(future) if future else math.inf

    # -- audit ---------------------------------------------------------------

    def audit_rows(self):
        """Grid and slot-fraction history for CSV dumps."""
        rows = []
        for ell in range(self.L + 1):
            frac = self.fractions[ell]
            if frac is None:
                continue
            rows.append([ell, self._a(ell), self.vt, self.delta] + list(frac))
        return rows
