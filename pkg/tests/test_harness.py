"""Tests for the Monte-Carlo benchmark driver and its reports."""

import csv
import math

import numpy as np
import pytest

import kcde.harness as harness
from conftest import ref_kx, ref_ky, ref_qu
from kcde.datagen import load_csv, make_model, split_random
from kcde.harness import (
    DEFAULT_ESTIMATORS,
    ExperimentConfig,
    MCSummary,
    mse_score,
    run_experiment,
    run_replication,
)
from kcde.kernels import median_heuristic
from kcde.operators import PairedDataset
from kcde.selection import HyperGrid


class _Surface:
    """Stand-in with a fixed pdf_grid table, for scoring arithmetic."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def pdf_grid(self, X, ygrid):
        return self.values


class _Points:
    def __init__(self, xs):
        self.xs = np.asarray(xs, dtype=float)


class _Grid:
    def __init__(self, us):
        self.us = np.asarray(us, dtype=float)


SMALL_HYPER = HyperGrid(L_x=1, L_y=1, L_lam=1, T1=3, T2=2)


def _tiny_config(**overrides):
    base = dict(model=make_model("mixture", d=1), n_train=12, n_val=8, n_test=6,
                n_u=5, n_mc=3, hyper=SMALL_HYPER, estimators=("nw",), seed=7)
    base.update(overrides)
    return ExperimentConfig(**base)


# -- scoring ----------------------------------------------------------------


def test_mse_score_zero_when_fit_equals_truth():
    table = np.array([[0.3, 0.1], [0.2, 0.4]])
    test, grid = _Points(np.zeros((2, 1))), _Grid([0.0, 1.0])
    assert mse_score(_Surface(table), test, grid, _Surface(table)) == 0.0


def test_mse_score_constant_offset():
    table = np.array([[0.3, 0.1], [0.2, 0.4]])
    test, grid = _Points(np.zeros((2, 1))), _Grid([0.0, 1.0])
    got = mse_score(_Surface(table + 0.1), test, grid, _Surface(table))
    assert got == pytest.approx(0.01, rel=1e-12)


def test_mse_score_hand_grid():
    est = _Surface([[0.0, 1.0], [1.0, 0.0]])
    tru = _Surface([[0.0, 0.0], [0.0, 0.0]])
    test, grid = _Points(np.zeros((2, 1))), _Grid([0.0, 1.0])
    assert mse_score(est, test, grid, tru) == 0.5


# -- replications -------------------------------------------------------------


def test_run_replication_deterministic():
    config = _tiny_config()
    a = run_replication(config, 3)
    b = run_replication(config, 3)
    assert a.scores == b.scores
    assert a.params == b.params
    assert a.index == 3
    c = run_replication(config, 4)
    assert c.scores["nw"] != a.scores["nw"]


def test_run_replication_estimator_subset():
    config = _tiny_config(estimators=("nw", "kmd"))
    rep = run_replication(config, 0)
    assert set(rep.scores) == {"nw", "kmd"}
    assert set(rep.params) == {"nw", "kmd"}
    assert all(np.isfinite(v) for v in rep.scores.values())
    assert rep.seconds > 0.0


def test_run_replication_time_series_model():
    config = _tiny_config(model=make_model("cir"))
    rep = run_replication(config, 0)
    assert np.isfinite(rep.scores["nw"])


def test_run_replication_aux_design_paths():
    even = run_replication(_tiny_config(), 0)
    iid = run_replication(_tiny_config(aux_design="iid"), 0)
    # same split, different auxiliary points, so the scores must differ
    assert even.scores["nw"] != iid.scores["nw"]
    assert np.isfinite(iid.scores["nw"])


# -- experiment driver and reports --------------------------------------------


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_experiment_files_and_summary_integrity(tmp_path):
    config = _tiny_config(output=tmp_path)
    summary = run_experiment(config, threads=1, quiet=True)
    rep_rows = _read_rows(tmp_path / "mixture_d1_replications.csv")
    assert rep_rows[0] == ["replication", "estimator", "mse_or_dhat",
                           "selected_hx_factor", "selected_hy",
                           "selected_t_or_lambda", "seconds"]
    body = rep_rows[1:]
    assert len(body) == config.n_mc
    assert [row[0] for row in body] == ["0", "1", "2"]
    assert all(row[1] == "nw" for row in body)
    assert all(row[5] == "" for row in body)
    parsed = np.array([float(row[2]) for row in body])
    assert summary.n_effective == config.n_mc
    assert summary.failures == ()
    assert summary.mean("nw") == np.mean(parsed)
    assert summary.std("nw") == np.std(parsed, ddof=1)
    sum_rows = _read_rows(tmp_path / "mixture_d1_summary.csv")
    assert sum_rows[0] == ["model", "d", "metric", "estimator", "mean", "std",
                           "n_mc", "n_effective", "failures"]
    assert sum_rows[1][:4] == ["mixture", "1", "mse", "nw"]
    assert float(sum_rows[1][4]) == summary.mean("nw")
    assert float(sum_rows[1][5]) == summary.std("nw")
    assert sum_rows[1][6:] == ["3", "3", "0"]


def test_run_experiment_thread_count_invariance(tmp_path):
    dir1, dir2 = tmp_path / "t1", tmp_path / "t2"
    config1 = _tiny_config(n_mc=2, output=dir1)
    config2 = _tiny_config(n_mc=2, output=dir2)
    run_experiment(config1, threads=1, quiet=True)
    run_experiment(config2, threads=2, quiet=True)
    s1 = (dir1 / "mixture_d1_summary.csv").read_bytes()
    s2 = (dir2 / "mixture_d1_summary.csv").read_bytes()
    assert s1 == s2
    # per-replication rows agree except the wall-clock column
    r1 = _read_rows(dir1 / "mixture_d1_replications.csv")
    r2 = _read_rows(dir2 / "mixture_d1_replications.csv")
    assert [row[:6] for row in r1] == [row[:6] for row in r2]


def test_failed_replications_are_counted_and_skipped(tmp_path, monkeypatch, caplog):
    real = harness.run_replication

    def flaky(config, index, csv_data=None):
        if index == 1:
            raise RuntimeError("synthetic failure")
        return real(config, index, csv_data)

    monkeypatch.setattr(harness, "run_replication", flaky)
    config = _tiny_config(output=tmp_path)
    summary = run_experiment(config, threads=1, quiet=True)
    assert summary.n_effective == 2
    assert len(summary.failures) == 1
    assert summary.failures[0][0] == 1
    assert summary.n_effective + len(summary.failures) == config.n_mc
    body = _read_rows(tmp_path / "mixture_d1_replications.csv")[1:]
    assert [row[0] for row in body] == ["0", "2"]
    sum_rows = _read_rows(tmp_path / "mixture_d1_summary.csv")
    assert sum_rows[1][7:] == ["2", "1"]
    assert "failed replications: 1" in summary.table_text()


def test_report_scale_multiplies_printed_values():
    config = _tiny_config(report_scale=3)
    summary = MCSummary(config=config, kinds=("nw",),
                        scores={"nw": np.array([0.001, 0.002])},
                        seconds=np.array([0.1, 0.2]), failures=(), d=1)
    text = summary.table_text()
    assert "(values x1e3)" in text
    nw_line = [line for line in text.splitlines() if line.startswith("nw")][0]
    assert "1.5" in nw_line
    assert "0.7071" in nw_line
    plain = MCSummary(config=_tiny_config(), kinds=("nw",),
                      scores={"nw": np.array([0.001, 0.002])},
                      seconds=np.array([0.1, 0.2]), failures=(), d=1)
    assert "(values" not in plain.table_text()


# -- CSV mode ------------------------------------------------------------------


CSV_FIXTURE = """x1,x2,y
0.1,1.0,0.5
0.4,0.8,0.9
0.9,0.2,1.4
0.3,0.5,0.7
0.6,0.9,1.1
0.8,0.3,1.3
0.2,0.7,0.6
0.5,0.4,1.0
"""


def test_csv_mode_dhat_matches_hand_pipeline(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text(CSV_FIXTURE)
    hyper = HyperGrid(L_x=0, L_y=0, L_lam=0, T1=1, T2=1)
    config = ExperimentConfig(model=make_model("csv"), n_train=4, n_val=2,
                              n_test=2, n_u=3, n_mc=1, hyper=hyper,
                              estimators=("nw",), seed=5, csv_path=str(path),
                              output=tmp_path)
    rep = run_replication(config, 0)

    # hand pipeline: replay the replication stream, then score the single
    # grid point with scalar loops
    data = load_csv(path)
    support = (float(data.ys.min()), float(data.ys.max()))
    rng = np.random.default_rng(np.random.SeedSequence([5, 0]))
    train, val, test = split_random(data, 4, 2, 2, rng)
    us = np.linspace(support[0], support[1], 3)
    h_x = median_heuristic(train.xs)
    h_y = median_heuristic(train.ys)

    def nw_hat(x, y):
        weights = np.array([ref_kx(x, xi, h_x) for xi in train.xs])
        weights = weights / weights.sum()
        return sum(w * ref_ky(y, yi, h_y) for w, yi in zip(weights, train.ys))

    node_sq = [nw_hat(x, u) ** 2 for x in test.xs for u in us]
    point = [nw_hat(x, y) * ref_qu(y, support) for x, y in zip(test.xs, test.ys)]
    want = np.mean(node_sq) - 2.0 * np.mean(point)
    assert rep.scores["nw"] == pytest.approx(want, rel=1e-10)


def test_csv_mode_experiment_writes_tagged_files(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text(CSV_FIXTURE)
    hyper = HyperGrid(L_x=0, L_y=0, L_lam=0, T1=1, T2=1)
    config = ExperimentConfig(model=make_model("csv"), n_train=4, n_val=2,
                              n_test=2, n_u=3, n_mc=2, hyper=hyper,
                              estimators=("nw",), seed=5, csv_path=str(path),
                              output=tmp_path)
    summary = run_experiment(config, threads=1, quiet=True)
    assert summary.config.metric == "dhat"
    assert (tmp_path / "csv_d2_replications.csv").exists()
    rows = _read_rows(tmp_path / "csv_d2_summary.csv")
    assert rows[1][:3] == ["csv", "2", "dhat"]


# -- configuration -------------------------------------------------------------


def test_experiment_config_validation():
    with pytest.raises(ValueError, match="n_mc"):
        _tiny_config(n_mc=0)
    with pytest.raises(ValueError, match="seed"):
        _tiny_config(seed=-1)
    with pytest.raises(ValueError, match="unknown estimators"):
        _tiny_config(estimators=("nw", "ols"))
    with pytest.raises(ValueError, match="at least one estimator"):
        _tiny_config(estimators=())
    with pytest.raises(ValueError, match="aux_design"):
        _tiny_config(aux_design="sobol")
    with pytest.raises(ValueError, match="csv_path"):
        _tiny_config(model=make_model("csv"))


def test_experiment_config_properties():
    config = _tiny_config(model=make_model("mixture", d=2), estimators=["nw", "kmd"])
    assert config.metric == "mse"
    assert config.tag() == "mixture_d2"
    assert config.estimators == ("nw", "kmd")
    assert DEFAULT_ESTIMATORS == ("grs-els", "grs-fixed", "nw", "kmd")
    assert math.isnan(MCSummary(config=config, kinds=("nw",),
                                scores={"nw": np.array([0.5])},
                                seconds=np.array([0.1]), failures=(),
                                d=2).std("nw"))
