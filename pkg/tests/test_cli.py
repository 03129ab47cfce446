"""Tests for CLI functionality."""

import json
from pathlib import Path

import pytest
from typer.testing import CliRunner
from stable_width.cli import app
from stable_width.config import THREADS_ENV
from stable_width.reports import read_csv

runner = CliRunner()

@pytest.fixture(autouse=True)
def no_thread_env(monkeypatch):
    """Keep the caller's environment out of thread resolution."""
    monkeypatch.delenv(THREADS_ENV, raising=False)

def test_selftest(temp_home):
    """All closed-form checks pass."""
    result = runner.invoke(app, ["selftest"])
    assert result.exit_code == 0
    assert "checks passed" in result.stdout

def test_config_path(temp_home):
    """Test showing the config path before anything is stored."""
    result = runner.invoke(app, ["config", "config-path"])
    assert result.exit_code == 0
    assert "does not exist" in result.stdout

def test_config_set_show_remove(temp_home):
    """Test the user-default round trip through the CLI."""
    result = runner.invoke(app, ["config", "set-default", "--key", "threads", "--value", "4"])
    assert result.exit_code == 0
    assert "Set default" in result.stdout

    result = runner.invoke(app, ["config", "show"])
    assert result.exit_code == 0
    assert "threads" in result.stdout
    assert "user" in result.stdout

    result = runner.invoke(app, ["config", "remove-default", "--key", "threads"])
    assert result.exit_code == 0
    result = runner.invoke(app, ["config", "remove-default", "--key", "threads"])
    assert result.exit_code == 2

def test_config_invalid_action(temp_home):
    """Unknown actions are configuration errors."""
    result = runner.invoke(app, ["config", "bogus"])
    assert result.exit_code == 2
    assert "Invalid action" in result.stdout

def test_predict_writes_limit(temp_home, tmp_path, experiment, write_config):
    """predict writes the per-layer scales with provenance."""
    out = tmp_path / "out"
    result = runner.invoke(app, ["predict", "--config", str(write_config(experiment)), "--out", str(out)])
    assert result.exit_code == 0
    payload = json.loads((out / "experiment_limit.json").read_text())
    assert payload["univariate"]["layers"][0]["layer"] == 2
    assert payload["univariate"]["seed"] == 7
    assert len(payload["provenance"]["config_hash"]) == 64

def test_predict_constant_zero_gives_bias(temp_home, tmp_path, experiment, write_config):
    """With phi identically 0 every layer scale equals the bias scale."""
    experiment["network"]["activation"] = {"kind": "clipped-linear", "params": [0.0]}
    out = tmp_path / "out"
    result = runner.invoke(app, ["predict", "-c", str(write_config(experiment)), "-o", str(out)])
    assert result.exit_code == 0
    payload = json.loads((out / "experiment_limit.json").read_text())
    assert payload["univariate"]["layers"][0]["sigma"] == pytest.approx(1.0)

def test_predict_is_deterministic(temp_home, tmp_path, experiment, write_config):
    """Same config and seed give byte-identical output."""
    path = write_config(experiment)
    for name in ("a", "b"):
        assert runner.invoke(app, ["predict", "-c", str(path), "-o", str(tmp_path / name)]).exit_code == 0
    first = (tmp_path / "a" / "experiment_limit.json").read_bytes()
    assert first == (tmp_path / "b" / "experiment_limit.json").read_bytes()

def test_seed_flag_overrides_file(temp_home, tmp_path, experiment, write_config):
    """--seed replaces the seed from the file."""
    out = tmp_path / "out"
    result = runner.invoke(app, ["predict", "-c", str(write_config(experiment)), "--seed", "11", "-o", str(out)])
    assert result.exit_code == 0
    payload = json.loads((out / "experiment_limit.json").read_text())
    assert payload["univariate"]["seed"] == 11

def test_missing_config_flag(temp_home):
    """predict without --config is a configuration error."""
    result = runner.invoke(app, ["predict"])
    assert result.exit_code == 2

def test_malformed_json_exit_code(temp_home, write_config):
    """Malformed JSON exits with code 2."""
    result = runner.invoke(app, ["predict", "-c", str(write_config('{"seed": 1,'))])
    assert result.exit_code == 2
    assert "malformed" in result.stdout

def test_unknown_key_cited(temp_home, experiment, write_config):
    """Schema failures name the offending key."""
    experiment["replicats"] = 10
    result = runner.invoke(app, ["predict", "-c", str(write_config(experiment))])
    assert result.exit_code == 2
    assert "replicats" in result.stdout

def test_verify_widths_not_increasing(temp_home, tmp_path, experiment, write_config):
    """Non-increasing widths exit with code 2."""
    experiment["widths"] = [40, 20]
    result = runner.invoke(app, ["verify", "-c", str(write_config(experiment)), "-o", str(tmp_path / "out")])
    assert result.exit_code == 2

def test_verify_zero_tolerance_fails(temp_home, tmp_path, experiment, write_config):
    """A zero tolerance cannot be met, so verify exits with code 1."""
    experiment["tolerances"] = {"sup_cf": 0.0}
    out = tmp_path / "out"
    result = runner.invoke(app, ["verify", "-c", str(write_config(experiment)), "-o", str(out)])
    assert result.exit_code == 1
    report = json.loads((out / "experiment_verify.json").read_text())
    assert report["flags"]["sup_cf"] is False
    rows = read_csv(out / "experiment_verify.csv")
    assert rows[0] == ["width", "t", "ecf", "predicted", "abs_diff"]
    assert {r[0] for r in rows[1:]} == {"20", "40"}

def test_verify_bad_thread_count(temp_home, experiment, write_config):
    """Zero threads is a configuration error."""
    result = runner.invoke(app, ["verify", "-c", str(write_config(experiment)), "--threads", "0"])
    assert result.exit_code == 2

def test_counterexample_small(temp_home, tmp_path, write_config):
    """The counterexample writes both scalings for every width."""
    path = write_config(
        {
            "schema_version": 1,
            "seed": 5,
            "counterexample": {"alpha": 1.5, "widths": [20, 200], "replicates": 1000, "bootstrap": 0},
        }
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["counterexample", "-c", str(path), "-o", str(out)])
    assert result.exit_code == 0
    report = json.loads((out / "experiment_counterexample.json").read_text())
    assert report["flags"]["growth"] is True and report["passed"] is True
    rows = read_csv(out / "experiment_counterexample.csv")
    assert rows[0] == ["width", "scaling_mode", "median_abs", "sigma_hat"]
    assert [(r[0], r[1]) for r in rows[1:]] == [
        ("20", "naive"),
        ("20", "corrected"),
        ("200", "naive"),
        ("200", "corrected"),
    ]

def test_sweep_two_alphas(temp_home, tmp_path, experiment, write_config):
    """Two alpha values give two report blocks with distinct seeds; a loose tolerance passes."""
    experiment["widths"] = [30]
    experiment["sweep"] = {"alpha": [1.0, 1.5]}
    experiment["tolerances"] = {"sup_cf": 2.0}
    out = tmp_path / "out"
    result = runner.invoke(app, ["sweep", "-c", str(write_config(experiment)), "-o", str(out)])
    assert result.exit_code == 0
    blocks = json.loads((out / "experiment_sweep.json").read_text())["points"]
    assert [b["params"]["alpha"] for b in blocks] == [1.0, 1.5]
    assert blocks[0]["seed"] != blocks[1]["seed"]
    assert all(b["report"]["passed"] for b in blocks)
    rows = read_csv(out / "experiment_sweep.csv")
    assert rows[0][:3] == ["point", "seed", "params"]
    assert {r[0] for r in rows[1:]} == {"0", "1"}

def test_sweep_failing_point_exit_code(temp_home, tmp_path, experiment, write_config):
    """A sweep point that misses its tolerance makes the sweep exit with code 1."""
    experiment["widths"] = [30]
    experiment["sweep"] = {"alpha": [1.5]}
    experiment["tolerances"] = {"sup_cf": 0.0}
    out = tmp_path / "out"
    result = runner.invoke(app, ["sweep", "-c", str(write_config(experiment)), "-o", str(out)])
    assert result.exit_code == 1
    blocks = json.loads((out / "experiment_sweep.json").read_text())["points"]
    assert blocks[0]["report"]["passed"] is False

def test_sweep_empty_grid(temp_home, experiment, write_config):
    """An empty sweep grid exits with code 2."""
    experiment["sweep"] = {"alpha": []}
    result = runner.invoke(app, ["sweep", "-c", str(write_config(experiment))])
    assert result.exit_code == 2

def test_predict_keeps_run_log(temp_home, tmp_path, experiment, write_config):
    """Each run leaves a DEBUG-level log next to its outputs."""
    out = tmp_path / "out"
    assert runner.invoke(app, ["predict", "-c", str(write_config(experiment)), "-o", str(out)]).exit_code == 0
    text = (out / "experiment_predict.log").read_text()
    assert "stable_width.limit_theory" in text

def test_predict_matches_reference_sigma(temp_home, tmp_path, shipped_configs):
    """predict on the shipped tanh/Pareto(1.5) config lands inside the committed reference interval."""
    reference = json.loads((Path(__file__).parent / "data" / "tanh_a15_reference.json").read_text())
    out = tmp_path / "out"
    result = runner.invoke(app, ["predict", "-c", str(shipped_configs / "tanh_a15.json"), "-o", str(out)])
    assert result.exit_code == 0
    layer = json.loads((out / "tanh_a15_limit.json").read_text())["univariate"]["layers"][0]
    assert layer["layer"] == reference["layer"]
    lo, hi = reference["ci"]
    assert lo < layer["sigma"] < hi
    ci_lo, ci_hi = layer["sigma_ci"]
    width = ci_hi - ci_lo
    assert ci_lo - width < reference["sigma"] < ci_hi + width
