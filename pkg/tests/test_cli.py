import json

import numpy as np
import pandas as pd
import pytest

from orthoqr.cli import _parse_seeds, ConfigError, main
from orthoqr.metrics import REPORT_COLUMNS


def run_cli(argv):
    return main(argv)


def test_parse_seeds_forms():
    assert _parse_seeds("0-3") == [0, 1, 2, 3]
    assert _parse_seeds("0,3,7") == [0, 3, 7]
    assert _parse_seeds("2") == [2]
    with pytest.raises(ConfigError):
        _parse_seeds("1,1")


def test_generate_writes_dataset_and_oracle(tmp_path, capsys):
    out = tmp_path / "gen"
    code = run_cli(["generate", "--n", "200", "--noise", "3", "--seed", "1",
                    "--out", str(out)])
    assert code == 0
    data = pd.read_csv(out / "data.csv")
    assert data.shape == (200, 51)
    oracle = pd.read_csv(out / "oracle.csv")
    assert list(oracle.columns) == ["lo", "hi"]
    assert len(oracle) == 200
    blob = json.loads((out / "spec.json").read_text())
    assert blob == {"n": 200, "noise": 3.0, "seed": 1, "alpha": 0.1}
    covered = (oracle["lo"] <= data["y"]) & (data["y"] <= oracle["hi"])
    assert abs(covered.mean() - 0.9) < 0.08


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        run_cli(["generate", "--n", "50", "--noise", "10", "--out", str(out)])
    assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()


def test_run_requires_dataset(tmp_path):
    assert run_cli(["run", "--out", str(tmp_path / "r")]) == 2


def run_tiny(tmp_path, name="run", extra=()):
    out = tmp_path / name
    cfg = tmp_path / f"{name}_cfg.json"
    cfg.write_text(json.dumps({"dataset": "synthetic_low", "n": 400,
                               "max_epochs": 5, "patience": 5,
                               "wsc_directions": 20}))
    code = run_cli(["run", "--config", str(cfg), "--seeds", "0,1",
                    "--out", str(out), *extra])
    return code, out


def test_run_produces_full_output_layout(tmp_path):
    code, out = run_tiny(tmp_path)
    assert code == 0
    frame = pd.read_csv(out / "metrics.csv")
    assert list(frame.columns) == REPORT_COLUMNS
    # two seeds x (vanilla, orthogonal)
    assert len(frame) == 4
    assert set(frame["method"]) == {"vanilla", "orthogonal"}
    assert set(frame["seed"]) == {0, 1}
    assert frame["coverage"].between(0, 1).all()

    groups = pd.read_csv(out / "groups.csv")
    assert set(groups["group"]) == {0, 1}

    agg = pd.read_csv(out / "aggregate.csv")
    expected_cols = ["dataset", "method"]
    for col in REPORT_COLUMNS[3:]:
        expected_cols += [f"{col}_mean", f"{col}_se"]
    assert list(agg.columns) == expected_cols
    assert len(agg) == 2

    assert len(list((out / "traces").glob("*.csv"))) == 4
    assert len(list((out / "intervals").glob("*.csv"))) == 4
    assert json.loads((out / "run_config.json").read_text())["seeds"] == [0, 1]


def test_run_is_byte_deterministic(tmp_path):
    _, out_a = run_tiny(tmp_path, "runa")
    _, out_b = run_tiny(tmp_path, "runb")
    for name in ("metrics.csv", "groups.csv", "aggregate.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_run_on_csv_dataset_without_groups(tmp_path):
    rng = np.random.default_rng(0)
    n = 300
    frame = pd.DataFrame({"f1": rng.uniform(0, 1, n), "f2": rng.uniform(0, 1, n)})
    frame["resp"] = frame["f1"] + 0.1 * rng.standard_normal(n)
    path = tmp_path / "toy.csv"
    frame.to_csv(path, index=False)
    out = tmp_path / "csvrun"
    code = run_cli(["run", "--dataset", str(path), "--target", "resp",
                    "--penalty", "none", "--max-epochs", "3",
                    "--seeds", "0", "--out", str(out)])
    assert code == 0
    metrics_frame = pd.read_csv(out / "metrics.csv")
    assert list(metrics_frame["method"]) == ["vanilla"]
    groups = pd.read_csv(out / "groups.csv")
    assert len(groups) == 0
    assert not (out / "aggregate.csv").exists()  # single seed: nothing to average


def test_run_quarantines_failing_trials(tmp_path):
    path = tmp_path / "degenerate.csv"
    # constant feature column: preprocessing aborts, the trial must be
    # quarantined rather than crashing the run
    pd.DataFrame({"a": np.ones(50), "y": np.arange(50.0)}).to_csv(path, index=False)
    out = tmp_path / "badrun"
    code = run_cli(["run", "--dataset", str(path), "--penalty", "none",
                    "--max-epochs", "2", "--seeds", "0", "--out", str(out)])
    assert code == 1
    errors = list((out / "errors").glob("seed0.txt"))
    assert len(errors) == 1
    assert "zero-variance" in errors[0].read_text()


def test_figures_outputs(tmp_path):
    code, out = run_tiny(tmp_path, "figrun")
    assert code == 0
    assert run_cli(["figures", "--run-dir", str(out)]) == 0
    fig1 = pd.read_csv(out / "figure1.csv")
    assert list(fig1.columns) == ["epoch", "split", "group", "method",
                                  "coverage", "is_best_epoch"]
    assert set(fig1["method"]) == {"vanilla", "orthogonal"}
    assert fig1["is_best_epoch"].any()
    fig2 = pd.read_csv(out / "figure2.csv")
    assert list(fig2.columns) == ["method", "bin", "mean_length", "coverage"]
    # bins ordered by nondecreasing mean length within each method
    for _, sub in fig2.groupby("method"):
        lengths = sub.sort_values("bin")["mean_length"].to_numpy()
        assert np.all(np.diff(lengths) >= -1e-12)


def test_figures_bins_split_evenly(tmp_path):
    # 200 intervals spread over 100 bins of 2
    rng = np.random.default_rng(1)
    out = tmp_path / "figbins"
    (out / "traces").mkdir(parents=True)
    (out / "intervals").mkdir()
    (out / "traces" / "trace_vanilla_seed0.csv").write_text(
        "epoch,split,group,coverage,loss\n0,train,all,0.5,1.0\n0,val,all,,1.0\n")
    lo = rng.uniform(0, 1, 200)
    hi = lo + rng.uniform(0.5, 1.5, 200)
    y = rng.uniform(0, 2, 200)
    pd.DataFrame({"y": y, "lo": lo, "hi": hi}).to_csv(
        out / "intervals" / "intervals_vanilla_seed0.csv", index=False)
    assert run_cli(["figures", "--run-dir", str(out)]) == 0
    fig2 = pd.read_csv(out / "figure2.csv")
    assert len(fig2) == 100
    assert fig2["bin"].tolist() == list(range(100))


def test_figures_without_traces_is_config_error(tmp_path):
    empty = tmp_path / "empty"
    (empty / "traces").mkdir(parents=True)
    assert run_cli(["figures", "--run-dir", str(empty)]) == 2


def test_audit_reports_metric_suite(tmp_path, capsys):
    rng = np.random.default_rng(2)
    n = 120
    x = rng.normal(size=n)
    lo = x - 1.0
    hi = x + 1.0
    y = x + rng.standard_normal(n)
    path = tmp_path / "intervals.csv"
    pd.DataFrame({"x0": x, "y": y, "lo": lo, "hi": hi}).to_csv(path, index=False)
    report_path = tmp_path / "report.json"
    code = run_cli(["audit", "--intervals", str(path),
                    "--wsc-directions", "20", "--out", str(report_path)])
    assert code == 0
    report = json.loads(report_path.read_text())
    for key in ("coverage", "length", "corr", "hsic", "wsc", "delta_wsc"):
        assert key in report
    assert report["length"] == pytest.approx(2.0)
    printed = json.loads(capsys.readouterr().out)
    assert printed == report


def test_audit_rejects_missing_columns(tmp_path):
    path = tmp_path / "broken.csv"
    pd.DataFrame({"y": [1.0, 2.0], "lo": [0.0, 1.0]}).to_csv(path, index=False)
    assert run_cli(["audit", "--intervals", str(path)]) == 2
