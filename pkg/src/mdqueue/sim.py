"""Event-driven simulation of the prelimit multi-class G/M/N system.

Service completions are realized through per-class exponential race timers
that are re-drawn whenever the allocation changes; by memorylessness this
matches the time-changed Poisson construction in law.  Arrival and service
randomness come from separate child streams of the master seed so that
arrival sample paths are matched across policies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .paths import TimeGrid
from .rate import ClassParams

__all__ = [
    "ScalingScheme",
    "InterArrivalFamily",
    "EventTrace",
    "ScaledTrace",
    "build_scaling",
    "simulate",
    "scale_trace",
    "payoff",
    "PolicyViolation",
    "default_initial_counts",
]

ARRIVAL, DEPARTURE, REALLOCATION = 0, 1, 2
_KIND_NAMES = {ARRIVAL: "arrival", DEPARTURE: "departure", REALLOCATION: "reallocation"}


class PolicyViolation(RuntimeError):
    """Raised when a policy emits an infeasible allocation."""


@dataclass(frozen=True)
class ScalingScheme:
    """Prelimit parameters of the n-th system under a moderate-deviation rule."""

    params: ClassParams
    n: int
    b_n: float
    N_n: int
    lam_n: np.ndarray
    mu_n: np.ndarray
    regime: dict = field(default_factory=dict, compare=False)

    @property
    def scale(self) -> float:
        """The moderate-deviation denominator b_n sqrt(n)."""
        return self.b_n * math.sqrt(self.n)

    @property
    def y_n(self) -> np.ndarray:
        lam_t = (self.lam_n - self.n * self.params.lam) / self.scale
        mu_t = (self.N_n * self.mu_n - self.n * self.params.mu) / self.scale
        return lam_t - self.params.rho * mu_t

    @property
    def theta_n(self) -> np.ndarray:
        return self.n / (self.N_n * self.mu_n)


def build_scaling(params: ClassParams, n: int, bn_rule=("power", 0.25),
                  Nn_rule=("power", 0.5)) -> ScalingScheme:
    """Instantiate the n-th system from rule families for b_n and N^n.

    bn_rule: ("power", p) with p in (0, 1/2) giving b_n = n^p, or ("log",)
    giving b_n = log(1 + n).  Nn_rule: ("power", q), q in (0, 1], giving
    N^n = floor(n^q), or ("fraction", c) giving N^n = floor(c n).  b_n is
    clamped into [1, sqrt(n)/2] where possible (for n < 4 the floor b_n = 1
    wins and the ratio bound cannot hold).  The regime report records which
    of the limits b_n/sqrt(n) -> 0, N^n/n -> 0, N^n/(b_n sqrt(n)) -> 0 the
    rule family satisfies.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    kind = bn_rule[0]
    if kind == "power":
        p = float(bn_rule[1])
        if not (0.0 < p < 0.5):
            raise ValueError(
                "bn power rule needs exponent in (0, 1/2): b_n must diverge "
                "with b_n/sqrt(n) -> 0"
            )
        b_n = float(n) ** p
    elif kind == "log":
        b_n = math.log(1.0 + n)
    else:
        raise ValueError(f"unknown bn_rule {bn_rule!r}")
    b_n = max(1.0, min(b_n, math.sqrt(n) / 2.0))

    nkind = Nn_rule[0]
    if nkind == "power":
        q = float(Nn_rule[1])
        if not (0.0 < q <= 1.0):
            raise ValueError("Nn power rule needs exponent in (0, 1]")
        N_n = max(1, int(math.floor(float(n) ** q)))
        Nn_over_n_to_0 = q < 1.0
        # N^n/(b_n sqrt n): with b_n = n^p this vanishes iff q < 1/2 + p
        Nn_over_scale_to_0 = (
            q < 0.5 + (float(bn_rule[1]) if kind == "power" else 0.0)
            if kind == "power"
            else q < 0.5
        )
        if kind == "log":
            Nn_over_scale_to_0 = q <= 0.5
    elif nkind == "fraction":
        c = float(Nn_rule[1])
        if not (0.0 < c <= 1.0):
            raise ValueError("Nn fraction rule needs a fraction in (0, 1]")
        N_n = max(1, int(math.floor(c * n)))
        Nn_over_n_to_0 = False
        Nn_over_scale_to_0 = False
    else:
        raise ValueError(f"unknown Nn_rule {Nn_rule!r}")

    scale = b_n * math.sqrt(n)
    lam_n = n * params.lam + scale * params.lam_tilde
    mu_n = (n * params.mu + scale * params.mu_tilde) / N_n
    if np.any(lam_n <= 0) or np.any(mu_n <= 0):
        raise ValueError("second-order drifts drive a prelimit rate nonpositive")
    regime = {
        "bn_over_sqrt_n_to_0": True,
        "Nn_over_n_to_0": Nn_over_n_to_0,
        "Nn_over_bn_sqrt_n_to_0": Nn_over_scale_to_0,
    }
    return ScalingScheme(params, n, b_n, N_n, lam_n, mu_n, regime)


@dataclass(frozen=True)
class InterArrivalFamily:
    """Unit-mean inter-arrival distribution with declared variance.

    kinds: exponential; erlang(k); hyperexponential(p, m1, m2) with
    p*m1 + (1-p)*m2 = 1; deterministic.
    """

    kind: str
    k: int = 1
    p: float = 0.5
    m1: float = 0.5
    m2: float = 1.5

    def __post_init__(self):
        if self.kind not in ("exponential", "erlang", "hyperexponential",
                             "deterministic"):
            raise ValueError(f"unknown inter-arrival kind {self.kind!r}")
        if self.kind == "erlang" and self.k < 1:
            raise ValueError("erlang shape must be >= 1")
        if self.kind == "hyperexponential":
            mean = self.p * self.m1 + (1.0 - self.p) * self.m2
            if abs(mean - 1.0) > 1e-9:
                raise ValueError("hyperexponential branch means must average to 1")

    @property
    def sigma2(self) -> float:
        if self.kind == "exponential":
            return 1.0
        if self.kind == "erlang":
            return 1.0 / self.k
        if self.kind == "deterministic":
            return 0.0
        second = 2.0 * (self.p * self.m1**2 + (1.0 - self.p) * self.m2**2)
        return second - 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "exponential":
            return rng.exponential(1.0, size)
        if self.kind == "erlang":
            return rng.gamma(self.k, 1.0 / self.k, size)
        if self.kind == "deterministic":
            return np.ones(size)
        branch = rng.random(size) < self.p
        draws = np.where(
            branch,
            rng.exponential(self.m1, size),
            rng.exponential(self.m2, size),
        )
        return draws


@dataclass
class EventTrace:
    """Exact event-time record of one simulation run."""

    scheme: ScalingScheme
    T: float
    X0: np.ndarray
    times: np.ndarray          # event times, increasing
    kinds: np.ndarray          # ARRIVAL / DEPARTURE / REALLOCATION
    classes: np.ndarray        # class index of the event (-1 for reallocation)
    X: np.ndarray              # post-event in-system counts, (n_events, I)
    B: np.ndarray              # post-event allocations, (n_events, I)
    arrivals: np.ndarray       # cumulative A_i after each event
    departures: np.ndarray     # cumulative D_i after each event
    alloc_integral: np.ndarray # exact int_0^t B_i ds after each event
    final_B_integral: np.ndarray  # int over [0, T]
    x0_discrepancy: float = 0.0

    @property
    def num_classes(self) -> int:
        return len(self.X0)

    def kind_names(self):
        return [_KIND_NAMES[k] for k in self.kinds]

    def verify(self) -> None:
        """Assert the pathwise conservation and feasibility identities."""
        I = self.num_classes
        N = self.scheme.N_n
        X, B = self.X, self.B
        if np.any(X < 0) or np.any(B < 0):
            raise AssertionError("negative counts in trace")
        if np.any(B > X):
            raise AssertionError("allocation exceeds population (B_i > X_i)")
        if np.any(B.sum(axis=1) > N):
            raise AssertionError("allocation exceeds server pool")
        expect = self.X0[None, :] + self.arrivals - self.departures
        if np.any(expect != X):
            raise AssertionError("flow balance X = X0 + A - D violated")
        # theta_n . Z^n nondecreasing from 0 reduces to sum_i T_i/N
        # having slope at most 1
        t_aug = np.concatenate([[0.0], self.times])
        alloc = np.concatenate([np.zeros((1, I)), self.alloc_integral])
        slack = t_aug - alloc.sum(axis=1) / N
        if np.any(np.diff(slack) < -1e-9 * max(1.0, self.T)):
            raise AssertionError("theta_n . Z^n failed to be nondecreasing")
        if slack[0] != 0.0:
            raise AssertionError("theta_n . Z^n must start from zero")

    def to_csv(self, dest) -> None:
        I = self.num_classes
        header = (
            "t,class,kind,"
            + ",".join(f"X{i + 1}" for i in range(I))
            + ","
            + ",".join(f"B{i + 1}" for i in range(I))
        )
        rows = []
        for j in range(len(self.times)):
            rows.append(
                [self.times[j], self.classes[j], self.kinds[j]]
                + list(self.X[j])
                + list(self.B[j])
            )
        arr = np.asarray(rows, dtype=float) if rows else np.empty((0, 3 + 2 * I))
        if hasattr(dest, "write"):
            np.savetxt(dest, arr, delimiter=",", header=header, comments="")
        else:
            with open(dest, "w") as fh:
                np.savetxt(fh, arr, delimiter=",", header=header, comments="")


def default_initial_counts(scheme: ScalingScheme, x_scaled) -> tuple[np.ndarray, float]:
    """Integer initial counts hitting a prescribed scaled initial condition.

    X_i(0) = floor(rho_i N^n + x_i b_n sqrt(n)); returns the counts and the
    worst per-class discrepancy of the realized scaled initial condition.
    """
    x_scaled = np.atleast_1d(np.asarray(x_scaled, dtype=float))
    raw = scheme.params.rho * scheme.N_n + x_scaled * scheme.scale
    X0 = np.floor(raw).astype(np.int64)
    if np.any(X0 < 0):
        raise ValueError("initial scaled state maps to negative counts")
    realized = (X0 - scheme.params.rho * scheme.N_n) / scheme.scale
    return X0, float(np.max(np.abs(realized - x_scaled)))


def simulate(
    scheme: ScalingScheme,
    families: list[InterArrivalFamily],
    policy,
    T: float,
    seed: int,
    x0_scaled=None,
    X0=None,
) -> EventTrace:
    """Run one replication and record every event.

    ``policy`` follows the protocol in :mod:`mdqueue.policies`: ``reset``
    then ``allocate(t, X, stats)`` after every arrival/departure and at its
    own registered deterministic time triggers; allocations are frozen in
    between.  Fully deterministic given (scheme, policy, seed).
    """
    I = scheme.params.num_classes
    if len(families) != I:
        raise ValueError("one inter-arrival family per class required")
    discrepancy = 0.0
    if X0 is None:
        if x0_scaled is None:
            x0_scaled = np.zeros(I)
        X0, discrepancy = default_initial_counts(scheme, x0_scaled)
    X0 = np.asarray(X0, dtype=np.int64)

    ss = np.random.SeedSequence(seed)
    children = ss.spawn(I + 1)
    arr_rngs = [np.random.default_rng(children[i]) for i in range(I)]
    srv_rng = np.random.default_rng(children[I])

    # pre-drawn arrival buffers, topped up on demand
    arr_buf = [list() for _ in range(I)]
    arr_next = np.empty(I)

    def draw_arrival(i):
        if not arr_buf[i]:
            arr_buf[i] = list(families[i].sample(arr_rngs[i], 256)[::-1])
        return arr_buf[i].pop() / scheme.lam_n[i]

    for i in range(I):
        arr_next[i] = draw_arrival(i)

    X = X0.copy()
    B = np.zeros(I, dtype=np.int64)
    A_cum = np.zeros(I, dtype=np.int64)
    D_cum = np.zeros(I, dtype=np.int64)
    Tcum = np.zeros(I)
    comp_next = np.full(I, math.inf)

    times, kinds, classes = [], [], []
    X_hist, B_hist, A_hist, D_hist, T_hist = [], [], [], [], []

    policy.reset(scheme, X0, T)

    def check_feasible(newB):
        newB = np.asarray(newB, dtype=np.int64)
        if newB.shape != (I,):
            raise PolicyViolation("allocation must be an integer I-vector")
        if np.any(newB < 0):
            raise PolicyViolation("allocation constraint violated: B_i >= 0")
        if np.any(newB > X):
            raise PolicyViolation("allocation constraint violated: B_i <= X_i")
        if newB.sum() > scheme.N_n:
            raise PolicyViolation(
                "allocation constraint violated: sum_i B_i <= N^n"
            )
        return newB

    def apply_allocation(t, newB):
        nonlocal B
        newB = check_feasible(newB)
        changed = newB != B
        B = newB
        for i in np.nonzero(changed)[0]:
            comp_next[i] = math.inf
        # re-arm the exponential race wherever it is down (covers both
        # allocation changes and the timer consumed by a departure)
        for i in range(I):
            if B[i] > 0 and comp_next[i] == math.inf:
                comp_next[i] = t + srv_rng.exponential(
                    1.0 / (scheme.mu_n[i] * B[i])
                )
            elif B[i] == 0:
                comp_next[i] = math.inf

    def record(t, kind, cls):
        times.append(t)
        kinds.append(kind)
        classes.append(cls)
        X_hist.append(X.copy())
        B_hist.append(B.copy())
        A_hist.append(A_cum.copy())
        D_hist.append(D_cum.copy())
        T_hist.append(Tcum.copy())

    now = 0.0
    stats = lambda: (A_cum.copy(), D_cum.copy(), Tcum.copy())
    apply_allocation(0.0, policy.allocate(0.0, X, stats()))
    record(0.0, REALLOCATION, -1)

    while True:
        trig = policy.next_trigger(now)
        t_arr = float(np.min(arr_next))
        t_dep = float(np.min(comp_next))
        t_next = min(t_arr, t_dep, trig)
        if t_next >= T:
            Tcum += B * (T - now)
            break
        # deterministic tie-breaking: arrival before departure, then class
        if t_arr <= t_dep and t_arr <= trig:
            i = int(np.argmin(arr_next))
            kind = ARRIVAL
            t_ev = t_arr
        elif t_dep <= trig:
            i = int(np.argmin(comp_next))
            kind = DEPARTURE
            t_ev = t_dep
        else:
            i = -1
            kind = REALLOCATION
            t_ev = trig
        Tcum += B * (t_ev - now)
        now = t_ev
        if kind == ARRIVAL:
            X[i] += 1
            A_cum[i] += 1
            arr_next[i] = now + draw_arrival(i)
        elif kind == DEPARTURE:
            X[i] -= 1
            D_cum[i] += 1
            comp_next[i] = math.inf  # re-armed by apply_allocation below
        apply_allocation(now, policy.allocate(now, X, stats()))
        record(now, kind, i)

    I_arr = np.asarray
    trace = EventTrace(
        scheme=scheme,
        T=T,
        X0=X0,
        times=I_arr(times, dtype=float),
        kinds=I_arr(kinds, dtype=np.int64),
        classes=I_arr(classes, dtype=np.int64),
        X=I_arr(X_hist, dtype=np.int64),
        B=I_arr(B_hist, dtype=np.int64),
        arrivals=I_arr(A_hist, dtype=np.int64),
        departures=I_arr(D_hist, dtype=np.int64),
        alloc_integral=I_arr(T_hist, dtype=float),
        final_B_integral=Tcum.copy(),
        x0_discrepancy=discrepancy,
    )
    return trace


@dataclass
class ScaledTrace:
    """Moderate-deviation scaled processes of a trace, on events and a grid."""

    scheme: ScalingScheme
    grid: TimeGrid
    event_times: np.ndarray
    Xtilde_events: np.ndarray
    Qtilde_events: np.ndarray
    Z_events: np.ndarray
    Xtilde: np.ndarray  # (K+1, I), left limits at grid nodes
    Qtilde: np.ndarray
    Z: np.ndarray

    @property
    def theta_n(self) -> np.ndarray:
        return self.scheme.theta_n


def _left_limit_rows(event_times, rows, first_row, t):
    idx = np.searchsorted(event_times, t, side="left") - 1
    stacked = np.concatenate([first_row[None, :], rows])
    return stacked[idx + 1]


def scale_trace(trace: EventTrace, grid: TimeGrid) -> ScaledTrace:
    """Scaled in-system, queue and allocation-deficit processes.

    Values are exact at event times; grid values are the left limits of the
    piecewise-constant scaled paths at the grid nodes.  Z is computed from
    the exact allocation integral.
    """
    scheme = trace.scheme
    I = trace.num_classes
    sc = scheme.scale
    rhoN = scheme.params.rho * scheme.N_n

    Xt_e = (trace.X - rhoN[None, :]) / sc
    Q_e = (trace.X - trace.B) / sc
    coef = (scheme.N_n * scheme.mu_n / scheme.n) * (math.sqrt(scheme.n) / scheme.b_n)
    t_e = trace.times[:, None]
    Z_e = coef[None, :] * (
        scheme.params.rho[None, :] * t_e - trace.alloc_integral / scheme.N_n
    )

    X0t = (trace.X0 - rhoN) / sc
    Q0 = trace.X0 / sc  # before the initial allocation decision B = 0
    nodes = grid.nodes
    Xt_g = _left_limit_rows(trace.times, Xt_e, X0t, nodes)
    Q_g = _left_limit_rows(trace.times, Q_e, Q0, nodes)
    # Z is continuous piecewise linear in t; interpolate on the exact values
    knots = np.concatenate([[0.0], trace.times])
    z_knots = np.concatenate([np.zeros((1, I)), Z_e])
    Z_g = np.empty((len(nodes), I))
    for i in range(I):
        Z_g[:, i] = np.interp(nodes, knots, z_knots[:, i])
        # beyond the last event Z keeps slope coef*(rho - B/N)
        late = nodes > knots[-1]
        if late.any():
            slope = coef[i] * (
                scheme.params.rho[i]
                - (trace.B[-1, i] if len(trace.times) else 0) / scheme.N_n
            )
            Z_g[late, i] = z_knots[-1, i] + slope * (nodes[late] - knots[-1])
    return ScaledTrace(
        scheme=scheme,
        grid=grid,
        event_times=trace.times,
        Xtilde_events=Xt_e,
        Qtilde_events=Q_e,
        Z_events=Z_e,
        Xtilde=Xt_g,
        Qtilde=Q_g,
        Z=Z_g,
    )


def payoff(trace: EventTrace, costs, T: float | None = None, target: str = "X") -> float:
    """int_0^T h of the scaled process plus terminal g, integrated exactly.

    The scaled paths are piecewise constant between events, so the integral
    is a finite weighted sum of post-event values.
    """
    if target not in ("X", "Q"):
        raise ValueError("target must be 'X' or 'Q'")
    if T is None:
        T = trace.T
    scheme = trace.scheme
    sc = scheme.scale
    rhoN = scheme.params.rho * scheme.N_n
    if target == "X":
        v0 = (trace.X0 - rhoN) / sc
        vals = (trace.X - rhoN[None, :]) / sc
    else:
        v0 = trace.X0 / sc
        vals = (trace.X - trace.B) / sc
    t = np.concatenate([[0.0], trace.times, [T]])
    rows = np.concatenate([v0[None, :], vals])
    widths = np.diff(t)
    hvals = costs.h(rows)
    running = float(np.sum(hvals * widths))
    terminal = float(costs.g(rows[-1]))
    return running + terminal
