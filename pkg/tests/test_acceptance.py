"""End-to-end acceptance checks, one test per numbered criterion.

Each test freezes an independently computed reference (closed form, grid
search, penalty integration, or birth-death formula) and compares the
package against it at a pinned tolerance.
"""
import math
import time

import numpy as np
import pytest
from scipy import optimize

from mdqueue.game import (
    CostFunctions,
    GameSpec,
    brute_force_value,
    check_strategy_admissible,
    min_curve_linear,
    reduce_to_workload,
    solve_value,
    strategy_zeta,
)
from mdqueue import fastsim
from mdqueue.paths import (
    SampledPath,
    TimeGrid,
    drift_reflect_ode,
    reflect_values,
    skorokhod_reflect,
    sup_norm,
)
from mdqueue.policies import (
    PolicySpec,
    TrackingConfig,
    TrackingPolicy,
    cmu_priority,
    make_policy,
)
from mdqueue.rate import (
    ClassParams,
    SingleClassParams,
    action_arrivals,
    min_split_rate,
    single_class_rate,
)
from mdqueue.riskcost import (
    _replication_payoffs,
    convergence_sweep,
    log_mean_exp,
)
from mdqueue.sim import (
    InterArrivalFamily,
    build_scaling,
    default_initial_counts,
    simulate,
)

EXP = InterArrivalFamily("exponential")


def one_class_params():
    return ClassParams(
        lam=np.array([1.0]), mu=np.array([1.0]), sigma2=np.array([1.0]),
        lam_tilde=np.zeros(1), mu_tilde=np.zeros(1),
    )


def two_class_params(lam=(0.5, 0.5), mu=(1.0, 1.0), sigma2=(1.0, 1.0)):
    return ClassParams(
        lam=np.asarray(lam, float), mu=np.asarray(mu, float),
        sigma2=np.asarray(sigma2, float),
        lam_tilde=np.zeros(2), mu_tilde=np.zeros(2),
    )


def random_walk_path(grid, rng, n_cols=1, slope_cap=3.0):
    inc = rng.uniform(-slope_cap, slope_cap, size=(grid.steps, n_cols)) * grid.dt
    vals = np.concatenate([np.zeros((1, n_cols)), np.cumsum(inc, axis=0)])
    return SampledPath(grid, vals)


# ---------------------------------------------------------------------------
# 1. reflection map vs penalty integration, plus the Lipschitz bound


def penalty_reflection_nodes(paths, p=1.0e4, substeps_per_unit=100_000):
    """Euler integration of z' = psi' + p z^- for a batch of scalar paths.

    As the penalty rate p grows the solution converges to the reflected
    path; the stationary defect while pushing is O(|psi'| / p).
    """
    grid = paths[0].grid
    vals = np.stack([q.scalar_values() for q in paths])  # (P, K+1)
    slopes = np.diff(vals, axis=1) / grid.dt
    m = max(1, int(round(substeps_per_unit * grid.dt)))
    h = grid.dt / m
    z = vals[:, 0].copy()
    out = np.empty_like(vals)
    out[:, 0] = z
    for k in range(grid.steps):
        s = slopes[:, k]
        for _ in range(m):
            z = z + h * (s + p * np.maximum(-z, 0.0))
        out[:, k + 1] = z
    return out


def test_criterion_01_skorokhod_map():
    t0 = time.monotonic()
    rng = np.random.default_rng(101)
    grid = TimeGrid(1.0, 64)
    paths = [random_walk_path(grid, rng) for _ in range(64)]
    oracle = penalty_reflection_nodes(paths)
    for q, ref in zip(paths, oracle):
        got = skorokhod_reflect(q).scalar_values()
        assert np.max(np.abs(got - ref)) < 1.0e-3

    for _ in range(1000):
        a = random_walk_path(grid, rng).scalar_values()
        b = random_walk_path(grid, rng).scalar_values()
        ra, rb = reflect_values(a), reflect_values(b)
        assert np.max(np.abs(ra - rb)) <= 2.0 * np.max(np.abs(a - b))
    assert time.monotonic() - t0 < 10.0


# ---------------------------------------------------------------------------
# 2. drift-reflection map: closed forms and the a-priori growth bound


def test_criterion_02_drift_reflection_map():
    grid = TimeGrid(1.0, 1024)
    zero = SampledPath(grid, np.zeros(grid.steps + 1))
    # xi' = (-xi)^+ with xi(0) = -1 integrates to -exp(-t)
    xi = drift_reflect_ode(-1.0, 0.0, 1.0, zero, zero)
    np.testing.assert_allclose(xi.scalar_values(), -np.exp(-grid.nodes),
                               atol=1.0e-4)
    # xi' = -1 + (-xi)^+ from zero integrates to exp(-t) - 1
    xi = drift_reflect_ode(0.0, -1.0, 1.0, zero, zero)
    np.testing.assert_allclose(xi.scalar_values(), np.exp(-grid.nodes) - 1.0,
                               atol=1.0e-4)

    rng = np.random.default_rng(102)
    cg = TimeGrid(1.0, 64)
    for _ in range(200):
        x0 = rng.uniform(-1.0, 1.0)
        y = rng.uniform(-2.0, 2.0)
        kappa = rng.uniform(0.0, 3.0)
        psi1 = random_walk_path(cg, rng)
        psi2 = random_walk_path(cg, rng)
        drive = x0 + y * cg.nodes + psi1.scalar_values() - psi2.scalar_values()
        xi = drift_reflect_ode(x0, y, kappa, psi1, psi2)
        bound = math.exp(kappa * 1.0) * np.max(np.abs(drive))
        assert sup_norm(xi) <= bound + 1.0e-3


# ---------------------------------------------------------------------------
# 3. rate functionals: scaling, closed-form split, penalty oracle


def reflected_rate_oracle(phi, sp, weight=1.0e6):
    """Cheapest net noise m with reflect(phi0 + r t + m) = phi, by penalty.

    Minimizes the quadratic action of m plus a stiff mean-square penalty on
    the reflected mismatch, starting from the unreflected interpolant.
    """
    vals = phi.scalar_values()
    grid = phi.grid
    dt = grid.dt
    denom = 2.0 * (sp.lam * sp.sigma2 + sp.mu)
    base = vals[0] + sp.r * grid.nodes

    def objective(inc):
        m = np.concatenate([[0.0], np.cumsum(inc)])
        mismatch = reflect_values(base + m) - vals
        rate = np.sum((inc / dt) ** 2) * dt / denom
        return rate + weight * np.mean(mismatch**2)

    inc0 = np.diff(vals - base)
    res = optimize.minimize(objective, inc0, method="L-BFGS-B")
    inc = res.x
    return np.sum((inc / dt) ** 2) * dt / denom


def test_criterion_03_rate_functionals():
    t0 = time.monotonic()
    rng = np.random.default_rng(103)
    p = one_class_params()
    grid = TimeGrid(1.0, 32)
    for _ in range(5):
        psi = random_walk_path(grid, rng)
        base = action_arrivals(psi, p)
        doubled = action_arrivals(SampledPath(grid, 2.0 * psi.values), p)
        assert doubled == 4.0 * base  # power-of-two scale keeps floats exact
        c = rng.uniform(0.3, 3.0)
        scaled = action_arrivals(SampledPath(grid, c * psi.values), p)
        assert scaled == pytest.approx(c * c * base, rel=1.0e-12)

    for _ in range(100):
        mdot = rng.uniform(-3.0, 3.0)
        a, b = rng.uniform(0.1, 5.0, size=2)
        u1, u2, cost = min_split_rate(mdot, a, b)
        assert u1 - u2 == pytest.approx(mdot, abs=1e-12)
        grid_u = np.linspace(mdot - 6.0, mdot + 6.0, 2001)
        coarse = grid_u[np.argmin(grid_u**2 / (2 * a)
                                  + (mdot - grid_u) ** 2 / (2 * b))]
        fine = np.linspace(coarse - 0.02, coarse + 0.02, 4001)
        best = np.min(fine**2 / (2 * a) + (mdot - fine) ** 2 / (2 * b))
        assert cost == pytest.approx(best, rel=1.0e-4, abs=1e-12)

    g16 = TimeGrid(1.0, 16)
    for _ in range(20):
        rate0 = rng.uniform(0.5, 2.0)
        sp = SingleClassParams(
            lam=rate0, mu=rate0,
            sigma2=rng.uniform(0.5, 2.0), r=rng.uniform(-1.0, 1.0),
        )
        steps = rng.uniform(-0.2, 0.2, size=16)
        vals = 0.5 + np.concatenate([[0.0], np.cumsum(steps)])
        vals = np.maximum(vals, 0.1)  # strictly positive target
        phi = SampledPath(g16, vals)
        got = single_class_rate(phi, sp, regime="reflected")
        ref = reflected_rate_oracle(phi, sp)
        assert got == pytest.approx(ref, rel=0.03, abs=1e-8)
    assert time.monotonic() - t0 < 120.0


# ---------------------------------------------------------------------------
# 4. analytic game values


def test_criterion_04_analytic_game_values():
    t0 = time.monotonic()
    p = one_class_params()
    costs = CostFunctions.linear([1.0], [0.0])
    spec = GameSpec(params=p, x=np.zeros(1), T=1.0, costs=costs,
                    curve=min_curve_linear(costs, p))
    V, _ = solve_value(spec, K=200)
    assert V == pytest.approx(1.0 / 3.0, rel=0.02)

    costs_t = CostFunctions.linear([0.0], [1.0])
    spec_t = GameSpec(params=p, x=np.zeros(1), T=1.0, costs=costs_t,
                      curve=min_curve_linear(costs_t, p))
    V, _ = solve_value(spec_t, K=200)
    assert V == pytest.approx(1.0, rel=0.02)

    costs_0 = CostFunctions.linear([0.0], [0.0])
    spec_0 = GameSpec(params=p, x=np.zeros(1), T=1.0, costs=costs_0,
                      curve=min_curve_linear(costs_0, p))
    V, _ = solve_value(spec_0, K=200)
    assert V == 0.0
    assert time.monotonic() - t0 < 60.0


# ---------------------------------------------------------------------------
# 5. workload reduction vs the full-dimensional oracle


def test_criterion_05_reduction_equivalence():
    rng = np.random.default_rng(105)
    for trial in range(10):
        mu = rng.uniform(0.5, 2.0, size=2)
        rho1 = rng.uniform(0.3, 0.7)
        rho = np.array([rho1, 1.0 - rho1])
        p = two_class_params(lam=rho * mu, mu=mu,
                             sigma2=rng.uniform(0.5, 2.0, size=2))
        # a common minimizing curve needs both cost-rate orderings aligned
        cmu = np.sort(rng.uniform(0.2, 2.0, size=2))[::-1]
        dmu = np.sort(rng.uniform(0.0, 1.0, size=2))[::-1]
        costs = CostFunctions.linear(cmu / mu, dmu / mu)
        spec = GameSpec(params=p, x=np.zeros(2), T=1.0, costs=costs,
                        curve=min_curve_linear(costs, p))
        V_red, _ = solve_value(spec, K=32, seed=trial)
        V_full = brute_force_value(spec, K=8, seed=trial)
        assert abs(V_red - V_full) <= 0.05 * (1.0 + abs(V_red))


# ---------------------------------------------------------------------------
# 6. strategy admissibility and minimality


def test_criterion_06_strategy_properties():
    rng = np.random.default_rng(106)
    p = two_class_params(lam=(0.4, 0.6), mu=(0.8, 1.2))
    costs = CostFunctions.linear([2.0, 1.0], [1.0, 0.5])
    curve = min_curve_linear(costs, p)
    spec = GameSpec(params=p, x=np.array([0.2, 0.1]), T=1.0, costs=costs,
                    curve=curve)
    grid = TimeGrid(1.0, 40)
    trials = [(random_walk_path(grid, rng, 2), random_walk_path(grid, rng, 2))
              for _ in range(100)]
    report = check_strategy_admissible(
        lambda a, b: strategy_zeta(spec, a, b)[0], spec, trials)
    assert report.ok, report.failures

    # any admissible alternative pays at least as much per time point:
    # an over-pushed workload and an off-curve selection on the level set
    expensive = int(np.argmax(np.asarray(costs.c) * p.mu))
    for psi1, psi2 in trials[:100]:
        _, phi = strategy_zeta(spec, psi1, psi2)
        h_opt = costs.h(phi.values)
        gamma = phi.values @ p.theta
        over = spec.curve(gamma + 0.05 * grid.nodes)
        assert np.all(costs.h(over) >= h_opt - 1.0e-9)
        alt = np.zeros_like(phi.values)
        alt[:, expensive] = gamma / p.theta[expensive]
        assert np.all(costs.h(alt) >= h_opt - 1.0e-9)
        assert costs.g(over[-1]) >= costs.g(phi.values[-1]) - 1.0e-9
        assert costs.g(alt[-1]) >= costs.g(phi.values[-1]) - 1.0e-9


# ---------------------------------------------------------------------------
# 7. simulator conservation laws and the birth-death oracle


def test_criterion_07_simulator_conservation():
    p2 = two_class_params()
    scheme = build_scaling(p2, 400)
    fams = [EXP, EXP]
    costs = CostFunctions.linear([2.0, 1.0], [0.0, 0.0])
    curve = min_curve_linear(costs, p2)
    specs = [
        PolicySpec(kind="cmu"),
        PolicySpec(kind="zero"),
        PolicySpec(kind="tracking", params=p2, curve=curve,
                   tracking=TrackingConfig(v=0.25)),
    ]
    X0, _ = default_initial_counts(scheme, np.array([0.1, 0.1]))
    for r in range(100):
        pol = make_policy(specs[r % len(specs)])
        trace = simulate(scheme, fams, pol, T=0.25, seed=(700, r), X0=X0)
        trace.verify()  # raises on any conservation or feasibility breach

    lam, mu, N = 4.0, 1.0, 5
    a = lam / mu
    terms = sum(a**k / math.factorial(k) for k in range(N))
    tail = a**N / (math.factorial(N) * (1.0 - a / N))
    p0 = 1.0 / (terms + tail)
    Lq = p0 * a**N * (a / N) / (math.factorial(N) * (1.0 - a / N) ** 2)
    Lsys = Lq + a
    est = fastsim.mmn_longrun_mean(lam, mu, N, 1.0e4, seed=7)
    assert est == pytest.approx(Lsys, rel=0.05)


# ---------------------------------------------------------------------------
# 8. scheduling policies: priority table, grids, causality, caps


def _drive(pol, calls):
    for t, X, A, D, Tc in calls:
        pol.allocate(t, np.asarray(X),
                     (np.asarray(A, float), np.asarray(D, float),
                      np.asarray(Tc, float)))


def _tracking_instance():
    p = two_class_params()
    costs = CostFunctions.linear([2.0, 1.0], [0.0, 0.0])
    pol = TrackingPolicy(p, min_curve_linear(costs, p), TrackingConfig(v=0.25))
    scheme = build_scaling(p, 400)
    pol.reset(scheme, np.array([36, 27]), 1.0)
    return pol, scheme


def _surplus_calls(scheme, times, extra_by):
    calls = []
    for t in times:
        extra = np.array([float(extra_by(t)), 0.0])
        calls.append((t, np.array([36.0, 27.0]) + extra,
                      scheme.lam_n * t + extra, np.zeros(2), np.zeros(2)))
    return calls


def test_criterion_08_policy_unit_behavior():
    np.testing.assert_array_equal(cmu_priority(np.array([3, 4]), 5), [3, 2])
    np.testing.assert_array_equal(cmu_priority(np.array([0, 0]), 5), [0, 0])
    np.testing.assert_array_equal(cmu_priority(np.array([7, 2]), 5), [5, 0])

    pol, scheme = _tracking_instance()
    np.testing.assert_allclose(
        [pol._a(ell) for ell in range(pol.L + 2)],
        np.linspace(0.0, 1.0, pol.L + 2))
    assert (pol.H + 1) * pol.delta == pytest.approx(pol.vt)

    # causality: mutating the stream strictly after a^2 leaves beta(3) alone
    times = np.arange(1, 334) * 0.003
    base = _surplus_calls(scheme, times, lambda t: np.floor(40 * t))
    _drive(pol, base)
    a2 = 2 * pol.vt
    mutated = [
        (t, X + 7.0 * (t > a2 + 1e-12), A + 7.0 * (t > a2 + 1e-12), D, Tc)
        for t, X, A, D, Tc in base
    ]
    pol_b, _ = _tracking_instance()
    _drive(pol_b, mutated)
    np.testing.assert_array_equal(pol.fractions[3], pol_b.fractions[3])
    assert not np.allclose(pol.fractions[4], pol_b.fractions[4])

    # deviation-norm cap
    pol_c, scheme_c = _tracking_instance()
    burst = math.ceil((pol_c.M + 3.0) * scheme_c.scale)
    _drive(pol_c, _surplus_calls(scheme_c, times,
                                 lambda t: burst if t > 0.25 else 0.0))
    capped = {ell: flag for ell, _, flag in pol_c.beta_history}
    assert capped[3] is True
    np.testing.assert_allclose(pol_c.fractions[3], pol_c.params.rho)

    # infeasible corrected fractions fall back to the stationary split
    pol_d, scheme_d = _tracking_instance()
    drop = math.ceil(0.6 * scheme_d.scale)
    calls = [(t, np.array([36.0, 27.0]), scheme_d.lam_n * t,
              np.array([float(drop) if t > 0.2 else 0.0, 0.0]), np.zeros(2))
             for t in times]
    _drive(pol_d, calls)
    capped = {ell: flag for ell, _, flag in pol_d.beta_history}
    assert capped[3] is True
    np.testing.assert_allclose(pol_d.fractions[3], pol_d.params.rho)


# ---------------------------------------------------------------------------
# 9. risk-sensitive estimator identities and policy-cost ordering


def test_criterion_09_estimator_identities_and_dominance():
    assert log_mean_exp(np.full(64, 1.7), 8.0) == pytest.approx(1.7, abs=1e-12)
    rng = np.random.default_rng(109)
    z = rng.normal(size=256)
    assert log_mean_exp(z + 5.0, 3.0) == pytest.approx(
        log_mean_exp(z, 3.0) + 5.0, abs=1e-12)
    two = np.array([0.0, math.log(4.0)])
    assert log_mean_exp(two, 1.0) == pytest.approx(math.log(2.5), abs=1e-12)
    # stiff-scale limit concentrates on the largest atom
    s = 200.0
    expected = 1.0 + (np.log1p(math.exp(-s)) - math.log(2.0)) / s
    assert log_mean_exp(np.array([0.0, 1.0]), s) == pytest.approx(
        expected, abs=1e-12)

    p = one_class_params()
    scheme = build_scaling(p, 100)
    costs = CostFunctions.linear([1.0], [0.0])
    X0, _ = default_initial_counts(scheme, np.zeros(1))
    z_idle = _replication_payoffs(costs, scheme, PolicySpec(kind="zero"),
                                  [EXP], 1.0, 50, 900, "X", X0, fast=False)
    z_cmu = _replication_payoffs(costs, scheme, PolicySpec(kind="cmu"),
                                 [EXP], 1.0, 50, 900, "X", X0, fast=False)
    assert np.all(z_idle >= z_cmu - 1e-12)


# ---------------------------------------------------------------------------
# 10. convergence of simulated costs toward the game value


def test_criterion_10_convergence_demonstration():
    t0 = time.monotonic()
    p = one_class_params()
    costs = CostFunctions.linear([1.0], [0.0])
    curve = min_curve_linear(costs, p)
    game = GameSpec(params=p, x=np.zeros(1), T=1.0, costs=costs, curve=curve)
    n_list = [400, 1600, 6400]
    R = 10_000
    rows_cmu = convergence_sweep(game, PolicySpec(kind="cmu"), n_list, R,
                                 seed=11)
    rows_trk = convergence_sweep(
        game,
        PolicySpec(kind="tracking", params=p, curve=curve,
                   tracking=TrackingConfig(v=0.25)),
        n_list, R, seed=11,
    )
    assert time.monotonic() - t0 < 1800.0

    assert abs(rows_cmu[-1]["gap"]) < 0.15
    for rc, rt in zip(rows_cmu, rows_trk):
        assert abs(rt["J"] - rc["J"]) <= 2.0 * (rt["se"] + rc["se"])

    gaps = [abs(r["gap"]) for r in rows_cmu]
    assert all(a >= b - 1e-12 for a, b in zip(gaps, gaps[1:])), gaps
