from __future__ import annotations

import csv
import io
import json
import logging
import sys

import pytest

from perf_retrain import cli, log
from perf_retrain._version import __version__

PO_FLAGS = ["--sigma0", "0.5", "--sigma", "0.5", "--mu0", "1", "--mu", "0"]


@pytest.fixture(autouse=True)
def _reset_logging():
    yield
    logger = logging.getLogger("perf_retrain")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.setLevel(logging.NOTSET)
    logger.propagate = True


def _rows(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def test_solve_distinct_solutions(capsys):
    assert cli.main(["solve", *PO_FLAGS]) == cli.EXIT_OK
    document = json.loads(capsys.readouterr().out)
    assert document["version"] == __version__
    report = document["report"]
    assert report["theta_ps"] == pytest.approx(1.0)
    assert report["theta_po"] == pytest.approx(0.6)
    assert report["gap"] == pytest.approx(0.1)
    assert report["relative_gap"] == pytest.approx(0.25)
    assert report["lambda_star"] == pytest.approx(2.0 / 3.0)
    assert report["lambda_star_valid"] is True


def test_solve_mean_shift_vector(capsys, tmp_path):
    config = tmp_path / "shift.json"
    config.write_text(json.dumps({"shift": {"sigma0": 1.0, "sigma": 0.0, "mu0": [1.0, 0.0], "mu": [[0.5, 0.0], [0.0, 0.5]]}}))
    assert cli.main(["solve", "--config", str(config)]) == cli.EXIT_OK
    report = json.loads(capsys.readouterr().out)["report"]
    assert report["theta_ps"] == pytest.approx([2.0, 0.0])
    assert report["gap"] == 0.0


def test_solve_expanding_map_is_a_regime_error(capsys):
    assert cli.main(["solve", "--mu", "1.5"]) == cli.EXIT_REGIME
    assert "||mu||_* < 1" in capsys.readouterr().err


def test_run_csv(capsys):
    assert cli.main(["run", "--sigma0", "1", "--sigma", "0", "--mu0", "1", "--mu", "0.5", "-T", "3"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith(f"# perf_retrain {__version__}\n# config ")
    rows = _rows(out)
    assert list(rows[0]) == ["t", "theta", "N_t", "lambda_t", "pr", "dist2_ps", "dist2_po", "diverged"]
    assert [float(row["theta"]) for row in rows] == [0.0, 1.0, 1.5, 1.75]
    assert rows[0]["N_t"] == ""
    assert {row["diverged"] for row in rows} == {"false"}


@pytest.mark.parametrize(("lam", "tol"), [("0.6667", 1e-4), ("star", 1e-9)])
def test_run_ridge_reaches_theta_po(capsys, lam, tol):
    argv = ["run", *PO_FLAGS, "--algo", "reg-rrm", "--lambda", lam, "-T", "50", "--reg", "ridge"]
    assert cli.main(argv) == cli.EXIT_OK
    rows = _rows(capsys.readouterr().out)
    assert float(rows[-1]["theta"]) == pytest.approx(0.6, abs=tol)


def test_run_invalid_lambda_star(capsys):
    argv = ["run", "--sigma0", "1", "--sigma", "0.5", "--mu0", "1", "--mu", "0.5", "--algo", "reg-rrm", "--lambda", "star"]
    assert cli.main(argv) == cli.EXIT_REGIME
    assert "not a valid ridge weight" in capsys.readouterr().err


def test_run_is_reproducible(tmp_path):
    path = tmp_path / "trajectory.csv"
    outputs = []
    for seed in ("7", "7", "8"):
        argv = ["run", "--algo", "rerm", "-T", "20", "--N", "2", "--seed", seed, "--out", str(path)]
        assert cli.main(argv) == cli.EXIT_OK
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]
    assert _rows(outputs[0].decode()) != _rows(outputs[2].decode())


def test_run_json_payload(capsys):
    assert cli.main(["run", "-T", "2", "--format", "json"]) == cli.EXIT_OK
    document = json.loads(capsys.readouterr().out)
    assert document["algorithm"] == "rrm"
    assert [step["t"] for step in document["steps"]] == [0, 1, 2]
    assert document["config"]["run"]["T"] == 2


def test_experiment_gap_identity(capsys):
    assert cli.main(["experiment", "gap-identity", "--seed", "1"]) == cli.EXIT_OK
    result = json.loads(capsys.readouterr().out)["results"][0]
    assert result["name"] == "gap-identity"
    assert result["verdict"] == "pass"
    assert result["predicted"] == pytest.approx(0.1)


def test_experiment_writes_csv_sibling(tmp_path):
    out = tmp_path / "sensitivity.json"
    assert cli.main(["experiment", "sensitivity", "--out", str(out)]) == cli.EXIT_OK
    assert json.loads(out.read_text())["results"][0]["verdict"] == "pass"
    text = (tmp_path / "sensitivity.csv").read_text()
    rows = _rows(text)
    assert rows[0]["experiment"] == "sensitivity"
    assert rows[0]["t"] == "0"


@pytest.mark.parametrize(
    "argv",
    [
        ["experiment", "gap-identity", "--seed", "3"],
        ["experiment", "rerm-mse", "--reps", "2000", "-T", "5", "--seed", "5"],
    ],
)
def test_experiment_files_do_not_depend_on_threads(tmp_path, argv):
    out = tmp_path / "result.json"
    files = []
    for threads in ("1", "4", "8"):
        assert cli.main([*argv, "--threads", threads, "--out", str(out)]) == cli.EXIT_OK
        files.append((out.read_bytes(), out.with_suffix(".csv").read_bytes()))
    assert files[0] == files[1] == files[2]
    assert "threads" not in json.loads(files[0][0])["config"]


def test_experiment_skipped_is_not_a_failure(capsys):
    argv = ["experiment", "lambda-star", "--sigma0", "1", "--sigma", "0.5", "--mu0", "1", "--mu", "0.5"]
    assert cli.main(argv) == cli.EXIT_OK
    captured = capsys.readouterr()
    assert json.loads(captured.out)["results"][0]["verdict"] == "skipped"
    assert "skipped" in captured.err


def test_unknown_experiment(capsys):
    assert cli.main(["experiment", "nonsense"]) == cli.EXIT_CONFIG
    assert "unknown experiment 'nonsense'" in capsys.readouterr().err


def test_experiment_name_from_config(capsys, tmp_path):
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({"experiment": {"name": "sensitivity"}}))
    assert cli.main(["experiment", "--config", str(config)]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["results"][0]["name"] == "sensitivity"
    assert cli.main(["experiment", "fixed-point", "--config", str(config)]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["results"][0]["name"] == "fixed-point"


def test_experiment_without_name(capsys):
    assert cli.main(["experiment"]) == cli.EXIT_CONFIG
    assert "experiment.name" in capsys.readouterr().err


def test_mahalanobis_loss(capsys, tmp_path):
    config = tmp_path / "loss.json"
    config.write_text(json.dumps({"loss": {"kind": "mahalanobis", "a": [[2.0]]}}))
    assert cli.main(["solve", "--config", str(config)]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["report"]["theta_ps"] == pytest.approx(2.0)
    assert cli.main(["run", "--loss", "mahalanobis", "--a", "2", "-T", "2"]) == cli.EXIT_OK
    assert [float(row["theta"]) for row in _rows(capsys.readouterr().out)] == [0.0, 1.0, 1.5]


def test_log_lines_follow_current_stderr(monkeypatch):
    logger = log.configure(3)
    first, second = io.StringIO(), io.StringIO()
    monkeypatch.setattr(sys, "stderr", first)
    logger.warning("one")
    first.close()
    monkeypatch.setattr(sys, "stderr", second)
    logger.warning("two")
    assert second.getvalue() == "WARNING perf_retrain: two\n"


def test_argument_errors_are_config_errors(capsys):
    assert cli.main(["run", "--algo", "sgd"]) == cli.EXIT_CONFIG
    assert cli.main([]) == cli.EXIT_CONFIG


def test_unknown_config_key(capsys, tmp_path):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"shift": {"mu": 0.5, "bogus": 1}}))
    assert cli.main(["solve", "--config", str(config)]) == cli.EXIT_CONFIG
    assert "unknown config key 'shift.bogus'" in capsys.readouterr().err


def test_flags_override_config_file(capsys, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"shift": {"mu0": 2.0, "mu": 0.5}, "seed": 3}))
    assert cli.main(["solve", "--config", str(config), "--mu", "0.25"]) == cli.EXIT_OK
    document = json.loads(capsys.readouterr().out)
    assert document["config"]["shift"] == {"mu0": 2.0, "mu": 0.25}
    assert document["config"]["seed"] == 3
    assert document["report"]["theta_ps"] == pytest.approx(2.0 / 0.75)


def test_sweep_relative_gap(capsys):
    argv = ["sweep", "--sigma0", "0.5", "--mu0", "1", "--mu", "0", "--grid", "sigma=0,0.5,1,2", "--outputs", "relative_gap"]
    assert cli.main(argv) == cli.EXIT_OK
    rows = _rows(capsys.readouterr().out)
    assert list(rows[0]) == ["sigma", "relative_gap"]
    assert [float(row["relative_gap"]) for row in rows] == pytest.approx([0.0, 0.25, 1.0, 4.0])


def test_sweep_plateau(capsys):
    argv = ["sweep", "--sigma0", "1", "--sigma", "0", "--mu", "0.5", "--grid", "N=1,4,16", "--outputs", "plateau,contractive"]
    assert cli.main(argv) == cli.EXIT_OK
    rows = _rows(capsys.readouterr().out)
    assert [float(row["plateau"]) for row in rows] == pytest.approx([4.0 / 3.0, 1.0 / 3.0, 1.0 / 12.0])
    assert {row["contractive"] for row in rows} == {"true"}


def test_sweep_grid_order_and_regime_cells(capsys):
    argv = ["sweep", "--grid", "mu=0.5,1.5", "--grid", "mu0=1,2", "--outputs", "theta_ps,contractive"]
    assert cli.main(argv) == cli.EXIT_OK
    rows = _rows(capsys.readouterr().out)
    assert [(row["mu"], row["mu0"]) for row in rows] == [("0.5", "1.0"), ("0.5", "2.0"), ("1.5", "1.0"), ("1.5", "2.0")]
    assert float(rows[1]["theta_ps"]) == pytest.approx(4.0)
    assert rows[2]["theta_ps"] == ""
    assert rows[2]["contractive"] == "false"


def test_sweep_grid_values_are_numbers_in_config(capsys):
    argv = ["sweep", "--grid", "sigma=0,0.5,1", "--outputs", "gap", "--format", "json"]
    assert cli.main(argv) == cli.EXIT_OK
    document = json.loads(capsys.readouterr().out)
    assert document["config"]["sweep"]["grid"] == {"sigma": [0.0, 0.5, 1.0]}
    assert [row["sigma"] for row in document["rows"]] == [0.0, 0.5, 1.0]


@pytest.mark.parametrize("grid", [[], ["--grid", "sigma="], ["--grid", "lambda=1"], ["--grid", "sigma=0,x"]])
def test_sweep_bad_grid(capsys, grid):
    assert cli.main(["sweep", *grid]) == cli.EXIT_CONFIG


@pytest.mark.slow
def test_check_suite(capsys):
    assert cli.main(["check", "--threads", "4"]) == cli.EXIT_OK
    results = json.loads(capsys.readouterr().out)["results"]
    assert [result["verdict"] for result in results] == ["pass"] * 6
