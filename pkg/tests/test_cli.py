import json
import os

import pytest
from click.testing import CliRunner

from cli import cli
from tests.conftest import DATA_DIR
from utils.exporters import read_csv, read_json

TWO_NODE = os.path.join(DATA_DIR, "two_node.json")


def write_config(tmp_path, body, name="run.toml"):
    path = tmp_path / name
    path.write_text(f'graph = "{TWO_NODE}"\n' + body, encoding="utf-8")
    return str(path)


SIGMA_ONE = """
[scenario]
gamma = {gamma}

[privacy]
sigmas = [1.0, 1.0]
"""

PAIR_CODESIGN = """
[privacy]
delta = 0.05
process_sigma = {process}

[scenario]
gamma = 0.25

[codesign]
e_R = {e_r}
lambda2_min = 0.5
vartheta = 1.0
eps_max = 5.0

[solver]
multistarts = 1
"""


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, list(args), catch_exceptions=False)


def test_analyze_writes_report(runner, tmp_path):
    config = write_config(tmp_path, SIGMA_ONE.format(gamma=0.25))
    out = tmp_path / "out"
    result = invoke(runner, "analyze", "--config", config, "--out", str(out))
    assert result.exit_code == 0
    report = read_json(out / "covariance_report.json")
    assert report["e_ss_exact"] == pytest.approx(1.0 / 24.0)
    assert report["e_ss_bound"] == pytest.approx(1.0 / 24.0)
    assert str(out / "covariance_report.json") in result.output


def test_simulate_is_reproducible(runner, tmp_path):
    config = write_config(tmp_path, SIGMA_ONE.format(gamma=0.25))
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = invoke(runner, "simulate", "--config", config, "--out", str(out),
                        "--seed", "17", "--trials", "2", "--horizon", "3000")
        assert result.exit_code == 0
        outputs.append((out / "comparison.json").read_text(encoding="utf-8"))
    assert outputs[0] == outputs[1]
    comparison = json.loads(outputs[0])
    assert comparison["trials"] == 2
    assert comparison["seed"] == 17
    assert comparison["e_ss_exact"] == pytest.approx(1.0 / 24.0)
    rows = read_csv(tmp_path / "a" / "trajectory.csv")
    assert list(rows[0]) == ["k", "agent", "dim", "x", "xbar", "e"]
    assert len(rows) == 3001 * 2


def test_unstable_step_size_exit_code(runner, tmp_path):
    config = write_config(tmp_path, SIGMA_ONE.format(gamma=1.5))
    result = invoke(runner, "analyze", "--config", config, "--out", str(tmp_path / "out"))
    assert result.exit_code == 4
    assert "error:" in result.output


def test_missing_config_exit_code(runner, tmp_path):
    result = invoke(runner, "analyze", "--config", str(tmp_path / "absent.toml"))
    assert result.exit_code == 2


def test_bad_config_value_exit_code(runner, tmp_path):
    config = write_config(tmp_path, "[scenario]\ngamma = 0.25\n[privacy]\nsigmas = [1.0]\n")
    result = invoke(runner, "analyze", "--config", config, "--out", str(tmp_path / "out"))
    assert result.exit_code == 2


def test_seed_out_of_range(runner, tmp_path):
    config = write_config(tmp_path, SIGMA_ONE.format(gamma=0.25))
    result = runner.invoke(cli, ["analyze", "--config", config, "--seed", "-3"])
    assert result.exit_code == 2


def test_infeasible_codesign_exit_code(runner, tmp_path):
    config = write_config(tmp_path, PAIR_CODESIGN.format(process=1.0, e_r=0.1))
    result = invoke(runner, "codesign", "--config", config, "--out", str(tmp_path / "out"))
    assert result.exit_code == 3
    assert "process-noise floor" in result.output


def test_codesign_writes_artifacts(runner, tmp_path):
    config = write_config(tmp_path, PAIR_CODESIGN.format(process=0.0, e_r=0.5))
    out = tmp_path / "out"
    result = invoke(runner, "codesign", "--config", config, "--out", str(out), "--seed", "3")
    assert result.exit_code == 0
    payload = read_json(out / "solution.json")
    assert payload["solution"]["converged"]
    assert payload["validation"]["feasible"]
    assert payload["seed"] == 3
    assert (out / "solution.dot").read_text(encoding="utf-8").startswith("graph formation")
    assert read_json(out / "solution_graph.json")["n"] == 2


def run_twice(runner, tmp_path, config, mode, *extra):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = invoke(runner, mode, "--config", config, "--out", str(out), "--seed", "11", *extra)
        assert result.exit_code == 0, result.output
        outputs.append({path.name: path.read_bytes() for path in sorted(out.iterdir())})
    return outputs


def test_codesign_artifacts_are_byte_identical(runner, tmp_path):
    config = write_config(tmp_path, PAIR_CODESIGN.format(process=0.0, e_r=0.5))
    first, second = run_twice(runner, tmp_path, config, "codesign")
    assert set(first) == {"solution.json", "solution_graph.json", "solution.dot"}
    assert first == second


def test_sweep_artifacts_are_byte_identical(runner, tmp_path):
    config = write_config(tmp_path, PAIR_CODESIGN.format(process=0.0, e_r=0.5))
    first, second = run_twice(runner, tmp_path, config, "sweep", "--axis", "e_R", "--value", "0.5", "--value", "1.0")
    assert set(first) == {"sweep.csv", "sweep.json"}
    assert first == second


def test_sweep_reports_infeasible_values(runner, tmp_path):
    config = write_config(tmp_path, PAIR_CODESIGN.format(process=1.0, e_r=1.0))
    out = tmp_path / "out"
    result = invoke(runner, "sweep", "--config", config, "--out", str(out),
                    "--axis", "e_R", "--value", "0.1", "--value", "1.0")
    assert result.exit_code == 3
    summary = read_json(out / "sweep.json")
    assert [o["status"] for o in summary["outcomes"]][0] == "infeasible"
    rows = read_csv(out / "sweep.csv")
    assert {row["value"] for row in rows} == {"1.0"}
    assert len(rows) == 2


def test_sweep_axis_required(runner, tmp_path):
    config = write_config(tmp_path, PAIR_CODESIGN.format(process=0.0, e_r=0.5))
    result = invoke(runner, "sweep", "--config", config, "--out", str(tmp_path / "out"))
    assert result.exit_code == 2
