import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from cli import cli
from conftest import preset_problem
from solver import stepping_solve


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def _invoke(runner: CliRunner, *args: str):
    return runner.invoke(cli, list(args), catch_exceptions=False)


def test_solve_exp_growth_csv(runner, tmp_path):
    out = tmp_path / "solution.csv"
    result = _invoke(runner, "solve", "--kernel", "exp-growth", "--n", "1000", "--out", str(out))
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)["success"] is True

    lines = out.read_text().splitlines()
    assert lines[0] == "t,y0_picard,y0_stepping,gap"
    table = np.loadtxt(out, delimiter=",", skiprows=1)
    assert table.shape == (1001, 4)
    assert abs(table[-1, 1] - (math.e - 1.0)) < 1e-5
    assert np.max(table[:, 3]) < 1e-6
    # 17 significant digits survive the round trip
    stepped = stepping_solve(preset_problem("exp-growth"))
    assert np.max(np.abs(table[:, 2] - stepped.values)) <= 1e-12


def test_solve_jung_example_to_stdout(runner):
    result = _invoke(runner, "solve", "--kernel", "jung-example")
    assert result.exit_code == 0
    lines = result.stdout.strip().splitlines()
    assert lines[0] == "t,y0_picard,y0_stepping,gap"
    values = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    assert np.all(np.abs(values[:, 1]) <= 1e-8)


def test_solve_json(runner, tmp_path):
    out = tmp_path / "solution.json"
    result = _invoke(runner, "solve", "--kernel", "exp-growth", "--n", "200", "--format", "json", "--out", str(out))
    assert result.exit_code == 0
    artifact = json.loads(out.read_text())
    assert list(artifact)[:4] == ["t", "y0_picard", "y0_stepping", "gap"]
    assert artifact["converged"] is True
    assert len(artifact["t"]) == 201


def test_solve_non_convergence_exits_3(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('[problem]\nkernel = "exp-growth"\nn = 100\n\n[tolerances]\nmax_iter = 2\n')
    result = _invoke(runner, "solve", "--config", str(config), "--out", str(tmp_path / "y.csv"))
    assert result.exit_code == 3
    assert json.loads(result.stdout)["success"] is False


def test_malformed_interval_exits_2(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('[problem]\nkernel = "s * y"\nform = "state"\nt0 = 0.0\nr = -1.0\nlipschitz = 2.0\n')
    result = _invoke(runner, "solve", "--config", str(config))
    assert result.exit_code == 2
    status = json.loads(result.stdout)
    assert status["success"] is False
    assert "problem.r" in status["error"]


def test_malformed_toml_exits_2(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text("[problem\n")
    result = _invoke(runner, "certify", "--config", str(config))
    assert result.exit_code == 2
    assert "line 1" in json.loads(result.stdout)["error"]


def test_eta_below_lipschitz_exits_2(runner):
    result = _invoke(runner, "certify", "--eta", "1.5")
    assert result.exit_code == 2


def test_certify_constant_weight(runner, tmp_path):
    out = tmp_path / "cert.json"
    result = _invoke(runner, "certify", "--kernel", "jung-example", "--out", str(out))
    assert result.exit_code == 0
    artifact = json.loads(out.read_text())
    assert abs(artifact["eta"] - 2.414214) < 1e-6
    assert math.isclose(artifact["factor"], 728.6, rel_tol=1e-4)
    assert artifact["lr_product"] == 4.0
    assert artifact["hu_applicable"] is False
    assert artifact["k_min"] is None
    assert artifact["form"] == "HU"
    assert len(artifact["bound"]) == 1001


def test_certify_exponential_weight(runner, tmp_path):
    out = tmp_path / "cert.json"
    result = _invoke(runner, "certify", "--weight", "exp", "--out", str(out))
    assert result.exit_code == 0
    artifact = json.loads(out.read_text())
    assert abs(artifact["k_min"] - 0.8647) < 1e-4
    assert abs(artifact["kl_product"] - 1.729) < 1e-3
    assert artifact["hur_applicable"] is False
    assert artifact["form"] == "HUR"


def test_certify_small_regime(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('[problem]\nkernel = "0.1 * y"\nform = "state"\nt0 = 0.0\nr = 0.1\nn = 100\nlipschitz = 0.1\n')
    out = tmp_path / "cert.json"
    result = _invoke(runner, "certify", "--config", str(config), "--out", str(out))
    assert result.exit_code == 0
    artifact = json.loads(out.read_text())
    assert artifact["factor"] < 1.6
    assert artifact["hu_applicable"] is True


def test_certify_estimate_without_box_exits_2(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('[problem]\nkernel = "s * y"\nform = "state"\nt0 = 0.0\nr = 2.0\nlipschitz = "estimate"\n')
    result = _invoke(runner, "certify", "--config", str(config))
    assert result.exit_code == 2


def test_certify_csv_bound_table(runner, tmp_path):
    out = tmp_path / "bound.csv"
    result = _invoke(runner, "certify", "--n", "100", "--format", "csv", "--out", str(out))
    assert result.exit_code == 0
    table = np.loadtxt(out, delimiter=",", skiprows=1)
    assert table.shape == (101, 3)
    assert np.all(table[:, 2] <= table[:, 1])


def test_verify_scaled_shape(runner, tmp_path):
    out = tmp_path / "verify.json"
    result = _invoke(runner, "verify", "--epsilon", "0.01", "--magnitude", "0.01", "--out", str(out))
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["defect_admissible"] is True
    assert report["bound_satisfied"] is True
    assert abs(report["tightness"] - 0.0101) < 1e-4


def test_verify_exact_solution(runner, tmp_path):
    out = tmp_path / "verify.json"
    result = _invoke(runner, "verify", "--kernel", "exp-growth", "--magnitude", "0", "--out", str(out))
    assert result.exit_code == 0
    assert json.loads(out.read_text())["tightness"] < 1e-9


def test_verify_random_sweep(runner, tmp_path):
    out = tmp_path / "sweep.json"
    result = _invoke(
        runner,
        "verify",
        "--n", "200",
        "--epsilon", "0.01",
        "--perturbation", "random-smooth",
        "--seed", "1",
        "--sweep", "10",
        "--out", str(out),
    )
    assert result.exit_code == 0
    artifact = json.loads(out.read_text())
    assert artifact["violations"] == 0
    assert [case["seed"] for case in artifact["cases"]] == list(range(1, 11))


def test_verify_csv(runner, tmp_path):
    out = tmp_path / "sweep.csv"
    result = _invoke(runner, "verify", "--n", "200", "--sweep", "3", "--perturbation", "random-smooth", "--format", "csv", "--out", str(out))
    assert result.exit_code == 0
    assert out.read_text().splitlines()[0].startswith("seed,magnitude,defect_admissible")
    assert np.loadtxt(out, delimiter=",", skiprows=1).shape == (3, 10)


def test_compare(runner, tmp_path):
    out = tmp_path / "compare.json"
    result = _invoke(runner, "compare", "--weight", "exp", "--out", str(out))
    assert result.exit_code == 0
    artifact = json.loads(out.read_text())
    assert artifact["certificate_exists"] is True
    assert artifact["classical_applicable"] is False
    assert artifact["form"] == "HUR"
    assert artifact["notes"]


def test_reproduce_example_3_1(runner, tmp_path):
    out = tmp_path / "repro.json"
    result = _invoke(runner, "reproduce", "example-3-1", "--out", str(out))
    assert result.exit_code == 0, result.output
    (artifact,) = json.loads(out.read_text())
    assert artifact["passed"] is True
    assert artifact["lr_product"] > 1.0
    assert abs(artifact["eta"] - (1.0 + math.sqrt(2.0))) < 1e-9
    assert abs(artifact["tightness"] - 0.0101) < 1e-4
    assert "lipschitz_product_exceeds_one" in result.stdout


def test_reproduce_example_3_2(runner, tmp_path):
    out = tmp_path / "repro.json"
    result = _invoke(runner, "reproduce", "example-3-2", "--out", str(out))
    assert result.exit_code == 0, result.output
    (artifact,) = json.loads(out.read_text())
    assert artifact["checks"]["k_one_admissible"] is True
    assert artifact["k_declared_product"] == 2.0
    assert abs(artifact["k_min"] - 0.8647) < 1e-4


def test_reproduce_all_is_deterministic(runner, tmp_path):
    first, second = tmp_path / "first.json", tmp_path / "second.json"
    assert _invoke(runner, "reproduce", "all", "--seed", "0", "--out", str(first)).exit_code == 0
    assert _invoke(runner, "reproduce", "all", "--seed", "0", "--out", str(second)).exit_code == 0
    assert first.read_bytes() == second.read_bytes()
    assert [artifact["example"] for artifact in json.loads(first.read_text())] == ["example-3-1", "example-3-2"]


def test_unknown_example_is_a_usage_error(runner):
    assert runner.invoke(cli, ["reproduce", "example-9"]).exit_code == 2


def test_verify_on_non_contracting_grid_exits_2(runner):
    result = _invoke(runner, "verify", "--n", "10", "--eta", "2.0001", "--epsilon", "0.01", "--magnitude", "0")
    assert result.exit_code == 2
    assert "does not contract" in json.loads(result.stdout)["error"]


def test_overflowing_certificate_exits_3(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('[problem]\nkernel = "10 * y"\nform = "state"\nt0 = 0.0\nr = 100.0\nlipschitz = 10.0\n')
    result = _invoke(runner, "compare", "--config", str(config))
    assert result.exit_code == 3
    assert "overflows" in json.loads(result.stdout)["error"]


def test_solve_rejects_simpson(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('[problem]\nkernel = "exp-growth"\nn = 100\n\n[tolerances]\nquad_order = "simpson"\n')
    result = _invoke(runner, "solve", "--config", str(config))
    assert result.exit_code == 2
    assert "trapezoid" in json.loads(result.stdout)["error"]
