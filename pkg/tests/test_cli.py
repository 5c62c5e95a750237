import csv
import json
from pathlib import Path

import numpy as np
import pytest

from mdqueue.cli import EXIT_CONFIG, EXIT_OK, config_hash, load_config, main
from mdqueue.paths import TimeGrid, SampledPath, path_to_csv

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, data):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def base_config(**extra):
    cfg = {
        "schema_version": 1,
        "params": {"lam": [1.0], "mu": [1.0], "sigma2": [1.0]},
        "costs": {"kind": "linear", "c": [1.0], "d": [0.0]},
        "curve": "linear",
        "T": 1.0,
        "x": [0.0],
        "seed": 3,
    }
    cfg.update(extra)
    return cfg


# ---------------------------------------------------------------------------
# config loading


def test_load_config_rejects_wrong_schema_version(tmp_path):
    path = write_config(tmp_path, base_config(schema_version=99))
    assert main(["game-solve", "--config", path]) == EXIT_CONFIG


def test_load_config_rejects_missing_schema_version(tmp_path):
    cfg = base_config()
    del cfg["schema_version"]
    path = write_config(tmp_path, cfg)
    assert main(["game-solve", "--config", path]) == EXIT_CONFIG


def test_unknown_top_level_key_is_an_error(tmp_path):
    path = write_config(tmp_path, base_config(bogus_key=1))
    assert main(["game-solve", "--config", path]) == EXIT_CONFIG


def test_config_hash_is_stable_and_key_sensitive():
    a = base_config()
    b = base_config()
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 16
    assert config_hash(base_config(seed=4)) != config_hash(a)


def test_shipped_configs_load():
    for path in sorted(CONFIG_DIR.glob("*.json")):
        cfg = load_config(path)
        assert cfg["schema_version"] == 1


# ---------------------------------------------------------------------------
# reflect / rate


def test_reflect_round_trip(tmp_path):
    g = TimeGrid(1.0, 40)
    path = SampledPath(g, (-g.nodes)[:, None])
    src = tmp_path / "in.csv"
    dst = tmp_path / "out.csv"
    path_to_csv(path, src)
    assert main(["reflect", str(src), "--out", str(dst)]) == EXIT_OK
    with open(dst) as fh:
        rows = list(csv.reader(fh))
    vals = np.array([float(r[1]) for r in rows[1:]])
    np.testing.assert_allclose(vals, 0.0, atol=1e-12)


def test_rate_reports_quadratic_action(tmp_path):
    g = TimeGrid(1.0, 200)
    src = tmp_path / "phi.csv"
    out = tmp_path / "rate.json"
    path_to_csv(SampledPath(g, g.nodes[:, None]), src)
    cfgp = write_config(tmp_path, base_config())
    assert main(["rate", str(src), "--config", cfgp, "--regime", "ode",
                 "--out", str(out)]) == EXIT_OK
    payload = json.loads(out.read_text())
    # unit slope against a flat drift splits half the effort to each channel:
    # 1/(2 lam sigma^2) int 1 + 1/(2 mu) int 1 scaled by the optimal split
    assert payload["rate"] == pytest.approx(0.25, rel=1e-2)


def test_rate_requires_single_class(tmp_path):
    g = TimeGrid(1.0, 10)
    src = tmp_path / "phi.csv"
    path_to_csv(SampledPath(g, g.nodes[:, None]), src)
    cfg = base_config(params={"lam": [0.5, 0.5], "mu": [1.0, 1.0],
                              "sigma2": [1.0, 1.0]},
                      costs={"kind": "linear", "c": [1.0, 1.0],
                             "d": [0.0, 0.0]}, x=[0.0, 0.0])
    cfgp = write_config(tmp_path, cfg)
    assert main(["rate", str(src), "--config", cfgp]) == EXIT_CONFIG


# ---------------------------------------------------------------------------
# game-solve


def test_game_solve_shipped_config(tmp_path):
    out = tmp_path / "value.json"
    assert main(["game-solve", "--config",
                 str(CONFIG_DIR / "value_one_third.json"),
                 "--out", str(out)]) == EXIT_OK
    payload = json.loads(out.read_text())
    assert payload["V"] == pytest.approx(1.0 / 3.0, rel=0.02)
    assert payload["sigma_bar_sq"] == pytest.approx(2.0)
    # the minimizing deviation path rides alongside the value
    assert out.with_suffix(".csv").exists()


def test_game_solve_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cfg = str(CONFIG_DIR / "value_zero_costs.json")
    assert main(["game-solve", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["game-solve", "--config", cfg, "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_game_solve_seed_override_changes_search(tmp_path):
    out1, out2 = tmp_path / "s1.json", tmp_path / "s2.json"
    cfg = str(CONFIG_DIR / "value_one_third.json")
    assert main(["game-solve", "--config", cfg, "--out", str(out1),
                 "--seed-override", "100"]) == EXIT_OK
    assert main(["game-solve", "--config", cfg, "--out", str(out2),
                 "--seed-override", "101"]) == EXIT_OK
    v1 = json.loads(out1.read_text())["V"]
    v2 = json.loads(out2.read_text())["V"]
    assert v1 == pytest.approx(v2, rel=0.05)


# ---------------------------------------------------------------------------
# sim-run


def test_sim_run_writes_verified_trace(tmp_path):
    out = tmp_path / "trace.csv"
    cfg = write_config(tmp_path, base_config(
        n=100, policy={"kind": "nonidling-single"}))
    assert main(["sim-run", "--config", cfg, "--out", str(out)]) == EXIT_OK
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "class", "kind", "X1", "B1"]
    assert len(rows) > 10


def test_sim_run_zero_policy_trace_has_no_departures(tmp_path):
    out = tmp_path / "trace.csv"
    cfg = write_config(tmp_path, base_config(n=100, policy={"kind": "zero"}))
    assert main(["sim-run", "--config", cfg, "--out", str(out)]) == EXIT_OK
    with open(out) as fh:
        kinds = {row["kind"] for row in csv.DictReader(fh)}
    assert "departure" not in kinds


def test_sim_run_requires_n_and_policy(tmp_path):
    cfg1 = write_config(tmp_path, base_config(
        policy={"kind": "nonidling-single"}))
    assert main(["sim-run", "--config", cfg1,
                 "--out", str(tmp_path / "t.csv")]) == EXIT_CONFIG
    cfg2 = write_config(tmp_path, base_config(n=100))
    assert main(["sim-run", "--config", cfg2,
                 "--out", str(tmp_path / "t.csv")]) == EXIT_CONFIG


def test_sim_run_tracking_two_class_config(tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["sim-run", "--config",
                 str(CONFIG_DIR / "sim_two_class.json"),
                 "--out", str(out)]) == EXIT_OK
    with open(out) as fh:
        header = fh.readline().strip()
    assert header == "t,class,kind,X1,X2,B1,B2"


# ---------------------------------------------------------------------------
# cost-sweep / policy-compare


def test_cost_sweep_small_instance(tmp_path):
    out = tmp_path / "sweep.json"
    cfg = write_config(tmp_path, base_config(
        n_list=[100, 400], R=100, policy={"kind": "cmu"}, K=100))
    assert main(["cost-sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    payload = json.loads(out.read_text())
    assert len(payload["rows"]) == 2
    assert payload["V"] == pytest.approx(1.0 / 3.0, rel=0.02)
    csv_rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert csv_rows[0] == "n,b_n,N_n,J,se,ess,V,gap"


def test_cost_sweep_requires_n_list(tmp_path):
    cfg = write_config(tmp_path, base_config(policy={"kind": "cmu"}))
    assert main(["cost-sweep", "--config", cfg,
                 "--out", str(tmp_path / "s.json")]) == EXIT_CONFIG


def test_policy_compare_orders_idle_above_working(tmp_path):
    out = tmp_path / "cmp.json"
    cfg = write_config(tmp_path, base_config(n=400, R=150))
    assert main(["policy-compare", "--config", cfg,
                 "--out", str(out)]) == EXIT_OK
    payload = json.loads(out.read_text())
    pol = payload["policies"]
    assert {"nonidling-single", "zero", "tracking"} <= set(pol)
    assert pol["zero"]["J"] > pol["nonidling-single"]["J"]
