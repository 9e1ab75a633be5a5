import json

import numpy as np
import pytest
from click.testing import CliRunner

from pevcharge import storage
from pevcharge.cli import main
from pevcharge.errors import ScenarioMismatch
from pevcharge.experiment import compare_runs
from pevcharge.scenario import ScenarioConfig, generate_scenario
from pevcharge.storage import ConfigError, parse_config

SMALL = ["--seed", "3", "--days", "1"]


@pytest.fixture
def runner():
    return CliRunner()


def small_config(tmp_path, **scenario):
    body = {"scenario": {"households": 10, "penetration": 0.5, **scenario}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(body, indent=2))
    return str(path)


def test_scenario_round_trip(tmp_path, small_fleet):
    storage.save_scenario(small_fleet, tmp_path / "sc")
    back = storage.load_scenario(tmp_path / "sc")
    assert storage.fingerprint(back) == storage.fingerprint(small_fleet)
    assert np.array_equal(back.consumption, small_fleet.consumption)
    assert np.array_equal(back.depart, small_fleet.depart)
    assert back.specs == small_fleet.specs


def test_tampered_scenario_is_rejected(tmp_path, small_fleet):
    storage.save_scenario(small_fleet, tmp_path)
    path = tmp_path / storage.NET_LOAD_CSV
    lines = path.read_text().splitlines()
    lines[1] = "0,1.0,nan"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(Exception, match="fingerprint"):
        storage.load_scenario(tmp_path)


def test_config_errors_carry_line_numbers():
    with pytest.raises(ConfigError) as err:
        parse_config('{\n  "scenario": {\n    "seeed": 1\n  }\n}')
    assert err.value.line == 3
    with pytest.raises(ConfigError) as err:
        parse_config('{\n  "days": 2,\n  "households": -4\n}')
    assert err.value.line == 3
    with pytest.raises(ConfigError) as err:
        parse_config('{\n  "days": 2,\n')
    assert err.value.line is not None


def test_flat_config_reads_as_scenario():
    doc = parse_config('{"days": 2, "classes": [{"name": "a", "fraction": 1, "c_offset": 5}]}')
    assert doc["scenario"].days == 2
    assert doc["scenario"].classes[0].c_offset == 5.0
    assert doc["online"] == {} and doc["solver"] == {}


def test_config_dict_round_trip():
    cfg = ScenarioConfig(days=3, seed=9)
    doc = parse_config(json.dumps(storage.config_to_dict(cfg)))
    assert doc["scenario"] == cfg


def test_generate_and_run_from_scenario(tmp_path, runner):
    cfg = small_config(tmp_path)
    res = runner.invoke(main, ["generate", "--config", cfg, *SMALL, "--out", str(tmp_path / "sc")])
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["fleet_size"] > 0
    out = tmp_path / "run"
    res = runner.invoke(main, ["run", "--scenario", str(tmp_path / "sc"), "--out", str(out)])
    assert res.exit_code == 0, res.output
    header = (out / "trace.csv").read_text().splitlines()[0].split(",")
    assert header == ["slot", "S_net", "total_load", "mean_queue_uniform", "U_ref", "iters"]
    assert {"schedule.csv", "queues.csv", "cost.json", "bound.json", "stability.json",
            "run.json"} <= {p.name for p in out.iterdir()}


def test_input_errors_exit_2(tmp_path, runner):
    res = runner.invoke(main, ["run", "--config", str(tmp_path / "missing.json"),
                               "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
    assert json.loads(res.stderr)["error"] == "InputError"
    cfg = small_config(tmp_path, profile_path=str(tmp_path / "nope.csv"))
    res = runner.invoke(main, ["generate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
    res = runner.invoke(main, ["run", *SMALL, "--beta", "-1", "--out", str(tmp_path / "o")])
    assert res.exit_code == 2


def test_unbalanced_run_is_flagged(tmp_path, runner):
    # A single bisection step cannot reach the tolerance.
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scenario": {"households": 5, "penetration": 1.0},
                                "online": {"max_iters": 1}}))
    res = runner.invoke(main, ["run", "--config", str(path), *SMALL, "--out", str(tmp_path / "o")])
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"] == "Flagged"
    assert (tmp_path / "o" / "trace.csv").exists()


def test_zero_vehicles_warns(tmp_path, runner):
    res = runner.invoke(main, ["generate", "--penetration", "0", *SMALL, "--out", str(tmp_path)])
    assert res.exit_code == 0
    assert "no vehicles" in res.stderr


def _run(runner, tmp_path, name, *args):
    out = tmp_path / name
    res = runner.invoke(main, ["run", "--config", small_config(tmp_path), *SMALL,
                               "--out", str(out), *args])
    assert res.exit_code == 0, res.output + res.stderr
    return str(out)


def test_compare_runs(tmp_path, runner):
    a = _run(runner, tmp_path, "a")
    b = _run(runner, tmp_path, "b")
    c = _run(runner, tmp_path, "c", "--algo", "static-forecast")
    rep = compare_runs([a, b])
    assert all(r["f_tilde_gap"] == 0 and r["variance_gap"] == 0 for r in rep["runs"])
    res = runner.invoke(main, ["compare", a, c, "--out", str(tmp_path / "cmp")])
    assert res.exit_code == 0, res.stderr
    rep = json.loads(res.output)
    assert "online_variance_lower" in rep
    assert (tmp_path / "cmp" / "compare.csv").exists()


def test_compare_rejects_mixed_scenarios(tmp_path, runner):
    a = _run(runner, tmp_path, "a")
    out = tmp_path / "other"
    runner.invoke(main, ["run", "--seed", "4", "--days", "1", "--config", small_config(tmp_path),
                         "--out", str(out)])
    with pytest.raises(ScenarioMismatch):
        compare_runs([a, str(out)])
    res = runner.invoke(main, ["compare", a, str(out)])
    assert res.exit_code == 2


def test_plot_flag_writes_figures(tmp_path, runner):
    out = _run(runner, tmp_path, "p", "--plot")
    from pathlib import Path
    for name in ("load.png", "soc.png"):
        data = (Path(out) / name).read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"


def test_runs_are_byte_identical(tmp_path, runner):
    a = _run(runner, tmp_path, "x")
    b = _run(runner, tmp_path, "y")
    from pathlib import Path
    for f in sorted(Path(a).glob("*.*")):
        assert f.read_bytes() == (Path(b) / f.name).read_bytes(), f.name


def test_generated_scenario_matches_library(tmp_path, runner):
    runner.invoke(main, ["generate", "--config", small_config(tmp_path), *SMALL,
                         "--out", str(tmp_path / "s")])
    lib = generate_scenario(ScenarioConfig(households=10, penetration=0.5, seed=3, days=1))
    assert storage.fingerprint(storage.load_scenario(tmp_path / "s")) == storage.fingerprint(lib)
