import numpy as np
import pandas as pd
import pytest

from orthoqr.datagen import Dataset, SyntheticSpec, generate_synthetic, preprocess, split
from orthoqr.training import (ARCHITECTURES, TrainConfig, TrainTrace,
                              config_to_dict, gamma_for, predict_intervals,
                              train)


def toy_dataset(n=300, seed=0, with_test=False):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 4))
    y = X[:, 0] + 0.5 * rng.standard_normal(n)
    data = Dataset(X, y)
    fractions = ({"train": 0.6, "val": 0.2, "test": 0.2} if with_test
                 else {"train": 0.8, "val": 0.2})
    return preprocess(split(data, fractions, seed=seed))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(gamma=-0.5)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    with pytest.raises(ValueError):
        TrainConfig(gamma=1.0, batch_size=1)


def test_gamma_table_lookups():
    assert gamma_for("facebook_1", "pinball", "corr") == 0.5
    assert gamma_for("synthetic_high", "interval_score", "corr") == 3.0
    assert gamma_for("meps_19", "pinball", "hsic") == 0.1
    with pytest.raises(KeyError, match="pass gamma explicitly"):
        gamma_for("unknown_data", "pinball", "corr")


def test_architectures_table():
    assert ARCHITECTURES["synthetic"] == {"hidden": (64, 64), "dropout": 0.0}
    assert ARCHITECTURES["real"] == {"hidden": (64, 64, 64), "dropout": 0.1}


def test_train_converges_on_constant_target():
    # skip preprocessing: a constant response has zero variance, and the
    # loop itself only needs splits
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, (200, 3))
    data = split(Dataset(X, np.zeros(200)), {"train": 0.8, "val": 0.2}, seed=1)
    config = TrainConfig(max_epochs=400, patience=400, lr=1e-2, seed=1,
                         track_coverage=False)
    model, trace = train(data, config)
    preds = model.forward(data.X, 0.5)
    assert np.abs(preds).max() < 0.05


def test_train_is_deterministic():
    data = toy_dataset()
    config = TrainConfig(max_epochs=12, patience=12, seed=3, track_coverage=False)
    model_a, trace_a = train(data, config)
    model_b, trace_b = train(data, config)
    for pa, pb in zip(model_a.params, model_b.params):
        np.testing.assert_array_equal(pa, pb)
    assert trace_a.val_loss == trace_b.val_loss


def test_gamma_zero_matches_vanilla_exactly():
    data = toy_dataset()
    base = TrainConfig(max_epochs=8, patience=8, seed=2, track_coverage=False)
    off = TrainConfig(max_epochs=8, patience=8, seed=2, penalty="corr",
                      gamma=0.0, track_coverage=False)
    model_a, _ = train(data, base)
    model_b, _ = train(data, off)
    for pa, pb in zip(model_a.params, model_b.params):
        np.testing.assert_array_equal(pa, pb)


def test_best_epoch_attains_minimum_validation_loss():
    data = toy_dataset()
    config = TrainConfig(max_epochs=30, patience=10, seed=4, track_coverage=False)
    model, trace = train(data, config)
    assert trace.best_epoch == int(np.argmin(trace.val_loss))


def test_early_stopping_restores_best_weights():
    data = toy_dataset(n=120, seed=5)
    config = TrainConfig(max_epochs=500, patience=15, seed=5, lr=5e-2,
                         track_coverage=False)
    model, trace = train(data, config)
    n_epochs = len(trace.val_loss)
    assert n_epochs < 500  # the aggressive learning rate triggers the stop
    assert n_epochs - trace.best_epoch >= 15
    X_val, y_val = data.rows("val")
    from orthoqr.losses import orthogonal_objective
    restored = float(orthogonal_objective(model, X_val, y_val, "pinball", "none", 0.0))
    assert restored == pytest.approx(min(trace.val_loss))


def test_coverage_trace_rows_and_csv(tmp_path):
    data = toy_dataset(with_test=True)
    config = TrainConfig(max_epochs=3, patience=3, seed=6)
    _, trace = train(data, config)
    epochs = {r[0] for r in trace.coverage_rows}
    assert epochs == {0, 1, 2}
    splits = {r[1] for r in trace.coverage_rows}
    assert splits == {"train", "test"}
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["epoch", "split", "group", "coverage", "loss"]
    assert set(frame["split"]) == {"train", "test", "val"}
    val = frame[frame["split"] == "val"]
    assert len(val) == 3
    np.testing.assert_allclose(val["loss"].to_numpy(), trace.val_loss)


def test_interval_score_training_runs():
    data = toy_dataset(n=150, seed=7)
    config = TrainConfig(loss="interval_score", penalty="corr", gamma=0.5,
                         max_epochs=4, patience=4, seed=7, batch_size=64,
                         track_coverage=False)
    model, trace = train(data, config)
    assert len(trace.val_loss) == 4
    assert np.isfinite(trace.val_loss).all()


def test_penalty_skipped_on_small_tail_batches():
    # batch_size 64 with 70 train rows leaves a 6-row tail; the penalty
    # must be skipped there rather than raising on the tiny batch
    rng = np.random.default_rng(8)
    X = rng.uniform(-1, 1, (88, 3))
    y = X[:, 0] + 0.1 * rng.standard_normal(88)
    data = preprocess(split(Dataset(X, y), {"train": 0.8, "val": 0.2}, seed=8))
    config = TrainConfig(penalty="hsic", gamma=1.0, batch_size=64,
                         max_epochs=2, patience=2, seed=8, track_coverage=False)
    model, trace = train(data, config)
    assert np.isfinite(trace.val_loss).all()


def test_predict_intervals_orders_endpoints_and_inverts_scaling():
    data = toy_dataset()
    config = TrainConfig(max_epochs=2, patience=2, seed=9, track_coverage=False)
    model, _ = train(data, config)
    X_test, _ = data.rows("val")
    y_raw = data.scaler.inverse_y(data.y[data.splits["val"]])
    batch = predict_intervals(model, X_test, y_raw, 0.1, scaler=data.scaler)
    assert np.all(batch.hi >= batch.lo)
    np.testing.assert_array_equal(batch.y, y_raw)


def test_synthetic_training_reaches_sane_coverage():
    spec = SyntheticSpec(n=1500, noise=3.0, seed=1)
    data = generate_synthetic(spec)
    data = preprocess(split(data, {"train": 0.72, "val": 0.08, "test": 0.20}, seed=0))
    config = TrainConfig(max_epochs=250, patience=250, seed=0, track_coverage=False)
    model, _ = train(data, config)
    X_test, _ = data.rows("test")
    y_raw = data.scaler.inverse_y(data.y[data.splits["test"]])
    batch = predict_intervals(model, X_test, y_raw, 0.1, scaler=data.scaler)
    # plain quantile regression undercovers here (the minority group is
    # noisy and the training set small); sanity bound only
    assert 0.6 <= batch.V_hard.mean() <= 1.0


def test_config_to_dict_round_trip():
    config = TrainConfig(loss="interval_score", gamma=3.0, seed=11)
    blob = config_to_dict(config)
    assert blob["loss"] == "interval_score"
    assert TrainConfig(**blob) == config
