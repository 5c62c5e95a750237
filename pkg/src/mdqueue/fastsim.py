"""Compiled single-class replication kernels for large Monte-Carlo sweeps.

The generic event engine records every event and supports arbitrary
policies; at R ~ 1e4 replications and n ~ 6e3 that bookkeeping dominates.
These kernels cover the cases the convergence sweeps actually need --
one class, exponential inter-arrivals, linear costs, and a policy that is
non-idling, zero, or the slot-tracking rule -- and return only the exact
integrals the payoff requires.  Everything else falls back to the engine.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["supports", "replication_payoffs", "mmn_longrun_mean"]


@njit(cache=True)
def _run_nonidling(lam_n, mu_srv, N, X0, T, seed, serve):
    """Gillespie walk of a single-class system with B = (X ^ N) * serve.

    Returns (int X dt, int (X - B) dt, X(T), B(T-)).  Re-drawing the
    exponential clock after every event is valid by memorylessness.
    """
    np.random.seed(seed)
    t = 0.0
    X = int(X0)
    intX = 0.0
    intQ = 0.0
    B = 0
    while t < T:
        B = min(X, N) if serve else 0
        rate = lam_n + mu_srv * B
        dt = np.random.exponential(1.0 / rate)
        step = min(dt, T - t)
        intX += X * step
        intQ += (X - B) * step
        t += dt
        if t >= T:
            break
        if np.random.random() < lam_n / rate:
            X += 1
        else:
            X -= 1
    return intX, intQ, X, B


@njit(cache=True)
def _run_tracking(
    lam_n, mu_srv, N, X0, T, seed,
    x, y, theta, mu_lim, rho, coefF, scale,
    vt, L, H, delta, gamma0, M,
):
    """Single-class slot-tracking replication.

    The schedule serves only inside the leading fraction of each micro
    interval; the fraction for block l >= 2 is computed at its entry from
    the strategy evaluated on the observed centered pair at the previous
    two macro boundaries.  Returns (int X dt, int (X - B) dt, X(T), B(T-)).
    """
    np.random.seed(seed)
    t = 0.0
    X = int(X0)
    A = 0.0
    D = 0.0
    Tc = 0.0
    intX = 0.0
    intQ = 0.0
    run_min_w = theta * x
    run_max_P = 0.0
    zeta = np.empty(L + 2)
    n_zeta = 0
    # boundary data at time zero
    w0 = theta * x
    zeta[0] = mu_lim * (w0 + max(0.0, -min(0.0, run_min_w))) - x
    n_zeta = 1
    Pnorm_prev = 0.0  # ||P||* at the boundary before the current block

    frac = gamma0
    ell = 0
    j = 0
    active = True  # the serving window opens each micro interval
    # next schedule boundary: end of the active window, then the next micro
    tb = frac * delta if frac > 0.0 else 0.0
    if frac <= 0.0:
        active = False
        tb = delta
    while t < T:
        B = min(X, N) if active else 0
        rate = lam_n + mu_srv * B
        dt = np.random.exponential(1.0 / rate)
        te = t + dt
        stop = min(te, tb)
        if stop >= T:
            intX += X * (T - t)
            intQ += (X - B) * (T - t)
            t = T
            break
        # advance the integrals and the Skorohod running minimum to `stop`
        seg = stop - t
        intX += X * seg
        intQ += (X - B) * seg
        Tc += B * seg
        t = stop
        At = (A - lam_n * t) / scale
        Dt = (D - mu_srv * Tc) / scale
        psi = x + y * t + At - Dt
        if theta * psi < run_min_w:
            run_min_w = theta * psi
        P = math.sqrt(At * At + Dt * Dt)
        if P > run_max_P:
            run_max_P = P
        if te < tb:
            # a jump: arrival or departure
            if np.random.random() < lam_n / rate:
                X += 1
                A += 1.0
            else:
                X -= 1
                D += 1.0
            At = (A - lam_n * t) / scale
            Dt = (D - mu_srv * Tc) / scale
            psi = x + y * t + At - Dt
            if theta * psi < run_min_w:
                run_min_w = theta * psi
            P = math.sqrt(At * At + Dt * Dt)
            if P > run_max_P:
                run_max_P = P
            continue
        # schedule boundary
        if active and frac < 1.0:
            active = False
            tb = ell * vt + (j + 1) * delta
            continue
        # end of a micro interval
        j += 1
        if j > H:
            j = 0
            ell += 1
            # macro boundary a^ell: record strategy value and pick fractions
            w = theta * psi
            zeta[n_zeta] = mu_lim * (w + max(0.0, -min(0.0, run_min_w))) - psi
            n_zeta += 1
            if ell == 1:
                frac = rho
            else:
                F = coefF * (zeta[n_zeta - 1] - zeta[n_zeta - 2]) / vt
                raw = rho - F
                if max(raw, 0.0) > 1.0 or Pnorm_prev >= M + 2.0:
                    frac = rho
                else:
                    frac = max(raw, 0.0)
            Pnorm_prev = run_max_P
        base = ell * vt + j * delta
        if frac > 0.0:
            active = True
            tb = base + frac * delta
        else:
            active = False
            tb = base + delta
    B = min(X, N) if active else 0
    return intX, intQ, X, B


def _linear_payoff(costs, scheme, target, intX, intQ, XT, BT, T):
    rho = float(scheme.params.rho[0])
    N = scheme.N_n
    sc = scheme.scale
    c = float(costs.c[0])
    d = float(costs.d[0])
    if target == "X":
        run = (intX - rho * N * T) / sc
        term = (XT - rho * N) / sc
    else:
        run = intQ / sc
        term = (XT - BT) / sc
    return c * run + d * term


def supports(scheme, policy_spec, families, costs) -> bool:
    """True when the compiled path covers this instance exactly."""
    if scheme.params.num_classes != 1:
        return False
    if any(f.kind != "exponential" for f in families):
        return False
    if getattr(costs, "kind", None) != "linear":
        return False
    if policy_spec.kind in ("cmu", "nonidling-single", "zero"):
        return True
    if policy_spec.kind == "tracking":
        curve = policy_spec.curve
        return curve is not None and curve.kind == "builtin-linear"
    return False


def _tracking_grid(cfg, scheme, T):
    v = cfg.v if cfg.v is not None else T / 4.0
    L = int(math.floor(T / v))
    vt = T / (L + 1)
    alpha = cfg.alpha_n
    if alpha is None:
        alpha = scheme.b_n / (math.sqrt(scheme.n) * math.log(scheme.n + 1.0))
    H = max(2, int(math.floor(vt / alpha)))
    delta = vt / (H + 1)
    p = scheme.params
    M = float(
        math.sqrt(2.0 * p.diffusivity[0] * cfg.Delta * T)
        + math.sqrt(2.0 * p.mu[0] * cfg.Delta * T)
    )
    return vt, L, H, delta, M


def replication_payoffs(costs, scheme, policy_spec, families, T, R, seed,
                        target, X0) -> np.ndarray:
    """Payoff samples of R replications through the compiled kernels."""
    from .policies import TrackingConfig  # avoid an import cycle at module load

    if not supports(scheme, policy_spec, families, costs):
        raise ValueError("instance outside the compiled fast path")
    lam_n = float(scheme.lam_n[0])
    mu_srv = float(scheme.mu_n[0])
    N = scheme.N_n
    X0 = int(np.atleast_1d(X0)[0])
    seeds = np.random.SeedSequence((seed,)).generate_state(R, dtype=np.uint32)
    z = np.empty(R)
    if policy_spec.kind == "tracking":
        p = scheme.params
        cfg = policy_spec.tracking or TrackingConfig()
        vt, L, H, delta, M = _tracking_grid(cfg, scheme, T)
        theta = float(p.theta[0])
        mu_lim = float(p.mu[0])
        rho = float(p.rho[0])
        x = (X0 - rho * N) / scheme.scale
        coefF = scheme.b_n / (mu_lim * math.sqrt(scheme.n))
        ell0 = policy_spec.curve(theta * x) - x  # off-curve correction
        raw = rho - coefF * float(ell0[0]) / vt
        gamma0 = max(raw, 0.0) if max(raw, 0.0) <= 1.0 else rho
        y = float(p.y[0])
        for r in range(R):
            intX, intQ, XT, BT = _run_tracking(
                lam_n, mu_srv, N, X0, T, seeds[r],
                x, y, theta, mu_lim, rho, coefF, scheme.scale,
                vt, L, H, delta, gamma0, M,
            )
            z[r] = _linear_payoff(costs, scheme, target, intX, intQ, XT, BT, T)
    else:
        serve = policy_spec.kind != "zero"
        for r in range(R):
            intX, intQ, XT, BT = _run_nonidling(
                lam_n, mu_srv, N, X0, T, seeds[r], serve
            )
            z[r] = _linear_payoff(costs, scheme, target, intX, intQ, XT, BT, T)
    return z


def mmn_longrun_mean(lam: float, mu: float, N: int, T: float, seed: int,
                     X0: int = 0) -> float:
    """Time-average number in an M/M/N system over [0, T]."""
    intX, _, _, _ = _run_nonidling(float(lam), float(mu), int(N), int(X0),
                                   float(T), seed, True)
    return intX / T
