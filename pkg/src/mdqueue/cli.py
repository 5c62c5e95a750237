"""Configuration-driven command line entry points.

Subcommands: reflect, rate, game-solve, sim-run, cost-sweep,
policy-compare.  Every command is deterministic given its config; outputs
carry the config hash so re-runs with an identical config overwrite
identically.  Exit codes: 0 ok, 2 config error, 3 numerical diagnostic.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .game import (
    CostFunctions,
    GameSpec,
    brute_force_value,
    min_curve_linear,
    min_curve_numeric,
    reduce_to_workload,
    solve_value,
)
from .paths import SampledPath, path_from_csv, path_to_csv, skorokhod_reflect
from .policies import PolicySpec, TrackingConfig, make_policy
from .rate import ClassParams, SingleClassParams, single_class_rate
from .riskcost import convergence_sweep, estimate_cost, sweep_to_csv, sweep_to_json
from .sim import (
    InterArrivalFamily,
    build_scaling,
    default_initial_counts,
    simulate,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config parsing


def _check_keys(d: dict, allowed, where: str):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown config keys in {where}: {sorted(unknown)}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"config schema_version must be {SCHEMA_VERSION}, "
            f"got {cfg.get('schema_version')!r}"
        )
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _parse_params(d: dict) -> ClassParams:
    _check_keys(d, {"lam", "mu", "sigma2", "lam_tilde", "mu_tilde"}, "params")
    try:
        lam = np.asarray(d["lam"], dtype=float)
        mu = np.asarray(d["mu"], dtype=float)
    except KeyError as exc:
        raise ConfigError(f"params missing field {exc}")
    I = len(lam)
    return ClassParams(
        lam=lam,
        mu=mu,
        sigma2=np.asarray(d.get("sigma2", np.ones(I)), dtype=float),
        lam_tilde=np.asarray(d.get("lam_tilde", np.zeros(I)), dtype=float),
        mu_tilde=np.asarray(d.get("mu_tilde", np.zeros(I)), dtype=float),
    )


def _parse_costs(d: dict, I: int) -> CostFunctions:
    _check_keys(d, {"kind", "c", "d"}, "costs")
    if d.get("kind", "linear") != "linear":
        raise ConfigError("only linear costs are configurable from file")
    return CostFunctions.linear(
        np.asarray(d.get("c", np.ones(I)), dtype=float),
        np.asarray(d.get("d", np.zeros(I)), dtype=float),
    )


def _parse_curve(cfg: dict, costs, params):
    choice = cfg.get("curve", "linear")
    if choice == "linear":
        return min_curve_linear(costs, params)
    if choice == "numeric":
        return min_curve_numeric(costs, params, np.linspace(0.0, 10.0, 201))
    raise ConfigError(f"curve must be 'linear' or 'numeric', got {choice!r}")


def _parse_policy(d: dict, params, curve) -> PolicySpec:
    _check_keys(d, {"kind", "order", "tracking"}, "policy")
    kind = d.get("kind")
    tr = None
    if kind == "tracking":
        trd = d.get("tracking", {})
        _check_keys(trd, {"Delta", "v", "alpha_n"}, "policy.tracking")
        tr = TrackingConfig(
            Delta=float(trd.get("Delta", 4.0)),
            v=trd.get("v"),
            alpha_n=trd.get("alpha_n"),
        )
    try:
        return PolicySpec(kind=kind, order=d.get("order"), tracking=tr,
                          params=params, curve=curve)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _parse_families(cfg: dict, I: int):
    fams = cfg.get("families", ["exponential"] * I)
    if len(fams) != I:
        raise ConfigError("one inter-arrival family per class required")
    out = []
    for f in fams:
        if isinstance(f, str):
            out.append(InterArrivalFamily(f))
        else:
            _check_keys(f, {"kind", "k", "p", "m1", "m2"}, "families[]")
            out.append(InterArrivalFamily(**f))
    return out


_EXPERIMENT_KEYS = {
    "schema_version", "params", "costs", "curve", "policy", "families",
    "T", "K", "x", "seed", "n", "n_list", "R", "target",
    "bn_rule", "Nn_rule", "out_dir", "brute_force_check",
}


def _experiment(cfg: dict):
    _check_keys(cfg, _EXPERIMENT_KEYS, "config")
    if "params" not in cfg:
        raise ConfigError("config must define params")
    params = _parse_params(cfg["params"])
    I = params.num_classes
    costs = _parse_costs(cfg.get("costs", {}), I)
    curve = _parse_curve(cfg, costs, params)
    T = float(cfg.get("T", 1.0))
    x = np.asarray(cfg.get("x", np.zeros(I)), dtype=float)
    spec = GameSpec(params=params, x=x, T=T, costs=costs, curve=curve)
    return cfg, params, costs, curve, spec


def _rules(cfg):
    bn = cfg.get("bn_rule", ["power", 0.25])
    Nn = cfg.get("Nn_rule", ["power", 0.5])
    return tuple(bn), tuple(Nn)


# --------------------------------------------------------------------------
# commands


def cmd_reflect(args) -> int:
    path = path_from_csv(args.input)
    out = skorokhod_reflect(path)
    path_to_csv(out, args.out)
    return EXIT_OK


def cmd_rate(args) -> int:
    cfg = load_config(args.config)
    cfg, params, costs, curve, spec = _experiment(cfg)
    if params.num_classes != 1:
        raise ConfigError("the rate command evaluates single-class targets")
    phi = path_from_csv(args.input)
    sp = SingleClassParams(
        lam=float(params.lam[0]), mu=float(params.mu[0]),
        sigma2=float(params.sigma2[0]),
        r=float(params.lam_tilde[0] - params.mu_tilde[0]),
    )
    value = single_class_rate(phi, sp, regime=args.regime)
    result = {"config": config_hash(cfg), "rate": value}
    _write_json(args.out, result)
    return EXIT_OK


def cmd_game_solve(args) -> int:
    cfg, params, costs, curve, spec = _experiment(load_config(args.config))
    K = int(cfg.get("K", 200))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    V, s_path = solve_value(spec, K=K, seed=seed)
    red = reduce_to_workload(spec)
    result = {
        "config": config_hash(cfg),
        "V": V,
        "w0": red.w0,
        "drift": red.drift,
        "sigma_bar_sq": red.sigma_bar_sq,
    }
    if cfg.get("brute_force_check"):
        Vb = brute_force_value(spec, K=8)
        result["V_brute_force"] = Vb
    if not np.isfinite(V):
        _write_json(args.out, result)
        return EXIT_NUMERIC
    _write_json(args.out, result)
    if args.out:
        path_to_csv(s_path, Path(args.out).with_suffix(".csv"))
    return EXIT_OK


def cmd_sim_run(args) -> int:
    cfg, params, costs, curve, spec = _experiment(load_config(args.config))
    n = cfg.get("n")
    if n is None:
        raise ConfigError("sim-run needs a system size n")
    bn_rule, Nn_rule = _rules(cfg)
    scheme = build_scaling(params, int(n), bn_rule=bn_rule, Nn_rule=Nn_rule)
    families = _parse_families(cfg, params.num_classes)
    if "policy" not in cfg:
        raise ConfigError("sim-run needs a policy")
    pspec = _parse_policy(cfg["policy"], params, curve)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    X0, _ = default_initial_counts(scheme, spec.x)
    trace = simulate(scheme, families, make_policy(pspec), spec.T,
                     seed=seed, X0=X0)
    trace.verify()
    trace.to_csv(args.out or "trace.csv")
    return EXIT_OK


def cmd_cost_sweep(args) -> int:
    cfg, params, costs, curve, spec = _experiment(load_config(args.config))
    n_list = cfg.get("n_list")
    if not n_list:
        raise ConfigError("cost-sweep needs a non-empty n_list")
    if "policy" not in cfg:
        raise ConfigError("cost-sweep needs a policy")
    pspec = _parse_policy(cfg["policy"], params, curve)
    families = _parse_families(cfg, params.num_classes)
    bn_rule, Nn_rule = _rules(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rows = convergence_sweep(
        spec, pspec, [int(n) for n in n_list], int(cfg.get("R", 200)), seed,
        families=families, bn_rule=bn_rule, Nn_rule=Nn_rule,
        target=cfg.get("target", "X"), solver_K=int(cfg.get("K", 200)),
    )
    out = Path(args.out or "sweep.json")
    sweep_to_csv(rows, out.with_suffix(".csv"))
    sweep_to_json(rows, out.with_suffix(".json"), instance_hash=config_hash(cfg))
    return EXIT_OK


def cmd_policy_compare(args) -> int:
    cfg, params, costs, curve, spec = _experiment(load_config(args.config))
    n = cfg.get("n")
    if n is None:
        raise ConfigError("policy-compare needs a system size n")
    bn_rule, Nn_rule = _rules(cfg)
    scheme = build_scaling(params, int(n), bn_rule=bn_rule, Nn_rule=Nn_rule)
    families = _parse_families(cfg, params.num_classes)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    R = int(cfg.get("R", 200))
    X0, _ = default_initial_counts(scheme, spec.x)
    result = {"config": config_hash(cfg), "n": int(n), "R": R, "policies": {}}
    kinds = ["cmu", "zero"] if params.num_classes > 1 else [
        "nonidling-single", "zero"]
    kinds.append("tracking")
    for kind in kinds:
        pspec = PolicySpec(kind=kind, params=params, curve=curve,
                           tracking=TrackingConfig())
        est = estimate_cost(costs, scheme, pspec, families, spec.T, R, seed,
                            target=cfg.get("target", "X"), X0=X0)
        result["policies"][kind] = {
            "J": est.J, "se": est.se, "ess": est.ess}
    _write_json(args.out, result)
    return EXIT_OK


def _write_json(out, payload):
    text = json.dumps(payload, indent=2, default=float) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mdqueue",
        description="Many-server queue experiments: reflection maps, "
        "action functionals, the workload game, and policy cost sweeps.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reflect", help="apply the reflection map to a CSV path")
    r.add_argument("input")
    r.add_argument("--out", required=True)
    r.set_defaults(fn=cmd_reflect)

    ra = sub.add_parser("rate", help="action functional of a CSV target path")
    ra.add_argument("input")
    ra.add_argument("--config", required=True)
    ra.add_argument("--regime", default="reflected",
                    choices=["reflected", "ode"])
    ra.add_argument("--out")
    ra.set_defaults(fn=cmd_rate)

    for name, fn, needs_seed in (
        ("game-solve", cmd_game_solve, True),
        ("sim-run", cmd_sim_run, True),
        ("cost-sweep", cmd_cost_sweep, True),
        ("policy-compare", cmd_policy_compare, True),
    ):
        q = sub.add_parser(name)
        q.add_argument("--config", required=True)
        q.add_argument("--out")
        if needs_seed:
            q.add_argument("--seed-override", dest="seed", type=int,
                           default=None)
        q.set_defaults(fn=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numerical diagnostic: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
