"""Tests for the command line interface."""

import csv
import pickle

import numpy as np
import pytest
from click.testing import CliRunner

import kcde.cli as cli
from kcde.cli import THREADS_ENV, main


@pytest.fixture()
def runner():
    return CliRunner()


TINY = ["--n-train", "12", "--n-val", "8", "--n-test", "6", "--n-u", "5",
        "--l-x", "0", "--l-y", "0", "--l-lam", "0", "--t1", "1", "--t2", "1"]


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- bench ---------------------------------------------------------------------


def test_bench_tiny_run_writes_reports(runner, tmp_path):
    result = runner.invoke(main, ["bench", "--model", "mixture", "--d", "1",
                                  "--n-mc", "2", "--seed", "3",
                                  "--estimators", "nw", *TINY,
                                  "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "mixture_d1_replications.csv").exists()
    assert (tmp_path / "mixture_d1_summary.csv").exists()
    assert "estimator" in result.output
    assert "nw" in result.output


def test_bench_estimator_subset_reported_per_replication(runner, tmp_path):
    result = runner.invoke(main, ["bench", "--model", "mixture", "--d", "1",
                                  "--n-mc", "2", "--seed", "3",
                                  "--estimators", "nw,kmd", *TINY,
                                  "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    body = _read_rows(tmp_path / "mixture_d1_replications.csv")[1:]
    assert [(row[0], row[1]) for row in body] == [
        ("0", "nw"), ("0", "kmd"), ("1", "nw"), ("1", "kmd")]


def test_bench_missing_model_is_diagnosed(runner):
    result = runner.invoke(main, ["bench", "--n-mc", "1"])
    assert result.exit_code != 0
    assert "--model is required" in result.output


def test_bench_csv_model_without_path_is_diagnosed(runner):
    result = runner.invoke(main, ["bench", "--model", "csv", "--n-mc", "1"])
    assert result.exit_code != 0
    assert "csv_path" in result.output


def test_bench_unknown_config_key_is_diagnosed(runner, tmp_path):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text("model = mixture\nbogus = 1\n")
    result = runner.invoke(main, ["bench", "--config", str(cfg)])
    assert result.exit_code != 0
    assert "unknown config keys" in result.output
    assert "bogus" in result.output


def test_bench_malformed_config_line_is_diagnosed(runner, tmp_path):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text("model mixture\n")
    result = runner.invoke(main, ["bench", "--config", str(cfg)])
    assert result.exit_code != 0
    assert "expected 'key = value'" in result.output


# -- flag/file/env resolution ----------------------------------------------------


@pytest.fixture()
def captured_bench(monkeypatch):
    calls = {}

    def fake_run_experiment(config, threads=1, quiet=False):
        calls["config"] = config
        calls["threads"] = threads

    monkeypatch.setattr(cli, "run_experiment", fake_run_experiment)
    return calls


def test_config_file_values_apply_and_flags_win(runner, tmp_path, captured_bench):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(
        "# benchmark settings\n"
        "model = mixture\n"
        "d = 2\n"
        "n-mc = 3\n"
        "seed = 9\n"
        "normalize = true\n"
        "estimators = nw\n"
    )
    result = runner.invoke(main, ["bench", "--config", str(cfg),
                                  "--n-mc", "1", "--no-normalize"])
    assert result.exit_code == 0, result.output
    config = captured_bench["config"]
    assert config.model.name == "mixture" and config.model.d == 2
    assert config.seed == 9
    assert config.estimators == ("nw",)
    assert config.n_mc == 1
    assert config.normalize is False


def test_threads_default_env_and_flag(runner, monkeypatch, captured_bench):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    args = ["bench", "--model", "mixture", "--n-mc", "1"]
    assert runner.invoke(main, args).exit_code == 0
    assert captured_bench["threads"] == 1
    monkeypatch.setenv(THREADS_ENV, "3")
    assert runner.invoke(main, args).exit_code == 0
    assert captured_bench["threads"] == 3
    assert runner.invoke(main, args + ["--threads", "2"]).exit_code == 0
    assert captured_bench["threads"] == 2


def test_grid_flags_reach_the_config(runner, captured_bench):
    result = runner.invoke(main, ["bench", "--model", "beta", "--d", "4",
                                  "--p-y", "1.8", "--l-lam", "2", "--t2", "5",
                                  "--report-scale", "2"])
    assert result.exit_code == 0, result.output
    config = captured_bench["config"]
    assert config.hyper.p_y == 1.8
    assert config.hyper.L_lam == 2
    assert config.hyper.T2 == 5
    assert config.report_scale == 2
    assert config.model.d == 4


def test_aux_design_default_flag_and_file(runner, tmp_path, captured_bench):
    args = ["bench", "--model", "mixture", "--n-mc", "1"]
    assert runner.invoke(main, args).exit_code == 0
    assert captured_bench["config"].aux_design == "even"
    assert runner.invoke(main, args + ["--aux-design", "iid"]).exit_code == 0
    assert captured_bench["config"].aux_design == "iid"
    cfg = tmp_path / "bench.cfg"
    cfg.write_text("model = mixture\naux-design = iid\n")
    assert runner.invoke(main, ["bench", "--config", str(cfg)]).exit_code == 0
    assert captured_bench["config"].aux_design == "iid"
    result = runner.invoke(main, args + ["--aux-design", "sobol"])
    assert result.exit_code != 0


# -- fit / eval -------------------------------------------------------------------


def test_fit_eval_round_trip_prints_full_precision(runner, tmp_path):
    model_path = tmp_path / "model.bin"
    result = runner.invoke(main, ["fit", "--model", "beta", "--d", "1",
                                  "--seed", "11", "--estimator", "nw", *TINY,
                                  "--out", str(model_path)])
    assert result.exit_code == 0, result.output
    assert "saved nw fit" in result.output
    assert model_path.exists()

    result = runner.invoke(main, ["eval", "--fit", str(model_path),
                                  "--x", "0.5", "--y", "0.3,0.6"])
    assert result.exit_code == 0, result.output
    lines = result.output.strip().splitlines()
    assert len(lines) == 2
    with open(model_path, "rb") as fh:
        fitted = pickle.load(fh)["fit"]
    want = fitted.pdf_points(np.array([[0.5], [0.5]]), np.array([0.3, 0.6]))
    assert lines == [f"{v:.17g}" for v in want]


def test_fit_eval_round_trip_iterated_estimator(runner, tmp_path):
    model_path = tmp_path / "grs.bin"
    result = runner.invoke(main, ["fit", "--model", "mixture", "--d", "1",
                                  "--seed", "4", "--estimator", "grs-els", *TINY,
                                  "--out", str(model_path)])
    assert result.exit_code == 0, result.output
    assert "t=" in result.output
    result = runner.invoke(main, ["eval", "--fit", str(model_path),
                                  "--x", "0.1", "--y", "0.0"])
    assert result.exit_code == 0, result.output
    float(result.output.strip())


def test_eval_rejects_missing_fit_file(runner, tmp_path):
    result = runner.invoke(main, ["eval", "--fit", str(tmp_path / "nope.bin"),
                                  "--x", "0.0", "--y", "0.0"])
    assert result.exit_code != 0


def test_eval_rejects_empty_response_list(runner, tmp_path):
    model_path = tmp_path / "model.bin"
    assert runner.invoke(main, ["fit", "--model", "beta", "--d", "1",
                                "--estimator", "nw", *TINY,
                                "--out", str(model_path)]).exit_code == 0
    result = runner.invoke(main, ["eval", "--fit", str(model_path),
                                  "--x", "0.5", "--y", ","])
    assert result.exit_code != 0
    assert "no response values" in result.output
