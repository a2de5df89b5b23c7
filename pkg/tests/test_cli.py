import csv
import json
from pathlib import Path

import pytest

import mimopower
from mimopower import cli
from mimopower.power_control import NumericalAbort

DESK_JSON = Path(mimopower.__file__).parent / "data" / "desk.json"

TINY = {
    "scenario": {"num_cells": 2, "users_per_cell": 3, "antennas": 8, "seed": 1},
    "pilots": {"kind": "nonorthogonal", "length": 4},
    "method": "deterministic",
    "solver": {"max_iter2": 200},
    "evaluation": {"draws": 40, "num_seeds": 3, "labels": ["D-N", "E-O"], "antennas": [4, 8]},
    "master_seed": 0,
}


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return list(csv.DictReader(lines[1:]))


def test_solve_default_converges_quickly(tmp_path):
    assert run("solve", "--out-dir", tmp_path, "--no-eval") == 0
    rows = read_rows(tmp_path / "trace.csv")
    assert 1 <= len(rows) <= 15
    obj = [float(r["objective_bits"]) for r in rows]
    assert all(b >= a - 1e-9 for a, b in zip(obj, obj[1:]))
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["converged"] and s["iterations"] == len(rows)
    p = json.loads((tmp_path / "power.json").read_text())["power_w"]
    assert len(p) == 63 and all(0 <= x <= 0.01 * (1 + 1e-12) for x in p)


def test_solve_stochastic_records_every_iteration(tmp_path, tiny):
    code = run("solve", "--config", tiny, "--method", "stochastic", "--max-iter", 100,
               "--out-dir", tmp_path, "--no-eval")
    assert code == 0
    assert len(read_rows(tmp_path / "trace.csv")) == 100


def test_solve_with_evaluation(tmp_path, tiny):
    assert run("solve", "--config", tiny, "--out-dir", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["draws"] == 40 and s["ergodic_sum_rate_bits"] > 0


def test_invalid_config_exits_2_naming_field(tmp_path, capsys):
    bad = json.loads(json.dumps(TINY))
    bad["scenario"]["cell_radius"] = -1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert run("solve", "--config", path, "--out-dir", tmp_path) == 2
    assert "cell_radius" in capsys.readouterr().err


def test_unknown_method_and_missing_file_exit_2(tmp_path):
    assert run("solve", "--method", "magic", "--out-dir", tmp_path) == 2
    assert run("solve", "--config", tmp_path / "nope.json") == 2
    assert run("frobnicate") == 2


def test_numerical_abort_exits_3(tmp_path, tiny, monkeypatch):
    def boom(*a, **k):
        raise NumericalAbort("non-finite iterate")

    monkeypatch.setattr(cli, "algorithm1", boom)
    assert run("solve", "--config", tiny, "--out-dir", tmp_path, "--no-eval") == 3


def test_scenario_subcommand(tmp_path, tiny):
    assert run("scenario", "--config", tiny, "--out-dir", tmp_path) == 0
    d = json.loads((tmp_path / "scenario.json").read_text())
    assert len(d["config_hash"]) == 16


def test_env_var_sets_output_dir(tmp_path, tiny, monkeypatch):
    monkeypatch.setenv("MIMOPOWER_OUT_DIR", str(tmp_path / "env"))
    assert run("scenario", "--config", tiny) == 0
    assert (tmp_path / "env" / "scenario.json").exists()


def test_benchmark_grid_outputs(tmp_path):
    code = run("benchmark", "--config", DESK_JSON, "--labels", "D-N,D-O,E-N,E-O",
               "--num-seeds", 10, "--draws", 100, "--out-dir", tmp_path)
    assert code == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert sorted(s["methods"]) == ["D-N", "D-O", "E-N", "E-O"]
    assert len(s["seeds"]) == 10
    assert all(len(v) == 1 for v in s["stream_ids"].values())
    rows = read_rows(tmp_path / "results.csv")
    assert len(rows) == 4 * 10 * 12
    cdf = read_rows(tmp_path / "cdf.csv")
    assert len(cdf) == 4 * 10 * 3


def test_benchmark_improvement_key_and_hash(tmp_path, tiny):
    assert run("benchmark", "--config", tiny, "--labels", "D-N,S-O", "--out-dir", tmp_path) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert "median_improvement_DN_over_SO_pct" in s
    h = s["config_hash"]
    for name in ("results.csv", "cdf.csv"):
        assert (tmp_path / name).read_text().splitlines()[0] == f"# config_hash={h}"


def test_benchmark_rerun_byte_identical(tmp_path, tiny):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("benchmark", "--config", tiny, "--out-dir", a) == 0
    assert run("benchmark", "--config", tiny, "--out-dir", b, "--threads", 2) == 0
    for name in ("results.csv", "cdf.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_hash_changes_with_settings(tmp_path, tiny):
    run("scenario", "--config", tiny, "--out-dir", tmp_path / "a")
    run("scenario", "--config", tiny, "--out-dir", tmp_path / "b", "--seed", 2)
    ha = json.loads((tmp_path / "a" / "scenario.json").read_text())["config_hash"]
    hb = json.loads((tmp_path / "b" / "scenario.json").read_text())["config_hash"]
    assert ha != hb


def test_sweep_rows(tmp_path, tiny):
    assert run("sweep", "--config", tiny, "--out-dir", tmp_path) == 0
    rows = read_rows(tmp_path / "sweep.csv")
    assert [int(r["antennas"]) for r in rows] == [4, 8]
    assert set(rows[0]) == {"antennas", "D-N", "E-O"}


def test_trace_has_hash_and_timing_switch(tmp_path, tiny):
    run("solve", "--config", tiny, "--out-dir", tmp_path, "--no-eval", "--no-timing")
    rows = read_rows(tmp_path / "trace.csv")
    assert all(float(r["wall_ms"]) == 0 for r in rows)
