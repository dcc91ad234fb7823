"""Mini-batch training of the quantile network with early stopping.

The run optimizes the penalized quantile objective on shuffled batches,
tracks a base (unpenalized) validation loss every epoch, and restores
the weights of the best validation epoch once no improvement has been
seen for `patience` epochs. Per-epoch coverage per group is recorded for
the training-dynamics figure.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict

import numpy as np

from ._random import substream
from .datagen import Dataset
from .losses import IntervalBatch, orthogonal_objective
from .nn import Adam, Mlp, loss_gradients

ARCHITECTURES = {
    "synthetic": {"hidden": (64, 64), "dropout": 0.0},
    "real": {"hidden": (64, 64, 64), "dropout": 0.1},
}

# Penalty multipliers selected on a held-out split, per dataset and loss.
GAMMA_TABLE = {
    "pinball": {
        "corr": {"facebook_1": 0.5, "facebook_2": 0.5, "blog_data": 0.5,
                 "bio": 0.1, "kin8nm": 0.1, "naval": 0.1, "meps_19": 0.5,
                 "meps_20": 0.5, "meps_21": 0.5,
                 "synthetic_low": 0.5, "synthetic_high": 0.5},
        "hsic": {"facebook_1": 0.5, "facebook_2": 0.5, "blog_data": 0.5,
                 "bio": 0.1, "kin8nm": 0.1, "naval": 0.1, "meps_19": 0.1,
                 "meps_20": 0.1, "meps_21": 0.5,
                 "synthetic_low": 0.5, "synthetic_high": 0.5},
    },
    "interval_score": {
        "corr": {"facebook_1": 0.5, "facebook_2": 0.5, "blog_data": 1.0,
                 "bio": 0.1, "kin8nm": 0.5, "naval": 0.1, "meps_19": 3.0,
                 "meps_20": 3.0, "meps_21": 3.0,
                 "synthetic_low": 3.0, "synthetic_high": 3.0},
    },
}


def gamma_for(dataset_name: str, loss_kind: str, penalty_kind: str) -> float:
    """Tuned penalty multiplier for a known dataset/loss/penalty combination."""
    try:
        return GAMMA_TABLE[loss_kind][penalty_kind][dataset_name]
    except KeyError:
        raise KeyError(
            f"no tuned multiplier for ({dataset_name!r}, {loss_kind!r}, "
            f"{penalty_kind!r}); pass gamma explicitly") from None


@dataclass
class TrainConfig:
    loss: str = "pinball"          # pinball | interval_score
    penalty: str = "none"          # none | corr | hsic
    gamma: float = 0.0
    alpha: float = 0.1
    batch_size: int = 1024
    lr: float = 1e-3
    max_epochs: int = 10_000
    patience: int = 200
    seed: int = 0
    architecture: str = "synthetic"
    smooth_slope: float = 5e3
    min_penalty_batch: int = 64    # skip the dependence penalty on tiny tail batches
    track_coverage: bool = True

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.gamma > 0 and self.batch_size < 2:
            raise ValueError("penalized training needs batch_size >= 2")


@dataclass
class TrainTrace:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    # rows (epoch, split, group, coverage)
    coverage_rows: list = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self, path) -> None:
        """Long-format trace: epoch, split, group, coverage, loss."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "split", "group", "coverage", "loss"])
            for epoch, split_name, group, cov in self.coverage_rows:
                loss = repr(self.train_loss[epoch]) if split_name == "train" else ""
                writer.writerow([epoch, split_name, group, repr(float(cov)), loss])
            for epoch, loss in enumerate(self.val_loss):
                writer.writerow([epoch, "val", "all", "", repr(float(loss))])


def _base_loss(model: Mlp, X, y, config: TrainConfig, alpha_draws=None) -> float:
    """Unpenalized quantile loss in eval mode (early-stopping criterion)."""
    return float(orthogonal_objective(
        model, X, y, config.loss, "none", 0.0, alpha=config.alpha,
        alpha_draws=alpha_draws, check_finite=False))


def _coverage_by_group(model: Mlp, X, y, group, alpha) -> list:
    lo = model.forward(X, alpha / 2.0)
    hi = model.forward(X, 1.0 - alpha / 2.0)
    covered = (np.minimum(lo, hi) <= y) & (y <= np.maximum(lo, hi))
    rows = [("all", float(covered.mean()))]
    if group is not None:
        for g in (0.0, 1.0):
            mask = group == g
            if mask.any():
                rows.append((int(g), float(covered[mask].mean())))
    return rows


def train(dataset: Dataset, config: TrainConfig) -> tuple[Mlp, TrainTrace]:
    """Fit the quantile network on the dataset's train split.

    Requires preprocessed data with train and val splits. Returns the
    model restored to the best validation epoch together with the trace.
    """
    X_train, y_train = dataset.rows("train")
    X_val, y_val = dataset.rows("val")
    arch = ARCHITECTURES[config.architecture]
    model = Mlp(dataset.p + 1, hidden=arch["hidden"], dropout=arch["dropout"],
                rng=substream(config.seed, "weight-init"))
    optimizer = Adam([p.shape for p in model.params], lr=config.lr)
    shuffle_rng = substream(config.seed, "batch-shuffle")
    alpha_rng = substream(config.seed, "alpha-sampling")
    dropout_rng = substream(config.seed, "dropout")
    # a fixed validation draw keeps the early-stopping criterion comparable
    # across epochs for the sampled-level loss
    val_draws = (substream(config.seed, "alpha-validation").uniform(0.0, 1.0, y_val.size)
                 if config.loss == "interval_score" else None)

    trace = TrainTrace()
    best_val = np.inf
    best_params = model.copy_params()
    n = y_train.size

    test_rows = dataset.splits.get("test")
    group = dataset.group

    train_draws = (substream(config.seed, "alpha-train-eval").uniform(0.0, 1.0, n)
                   if config.loss == "interval_score" else None)

    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            Xb, yb = X_train[batch], y_train[batch]
            gamma = config.gamma if batch.size >= config.min_penalty_batch else 0.0
            draws = (alpha_rng.uniform(0.0, 1.0, batch.size)
                     if config.loss == "interval_score" else None)

            def masks():
                return model.dropout_masks(len(batch), dropout_rng)

            masks_fn = masks if model.dropout > 0 else None

            def objective(params):
                return orthogonal_objective(
                    model, Xb, yb, config.loss, config.penalty, gamma,
                    alpha=config.alpha, slope=config.smooth_slope,
                    alpha_draws=draws, params=params, train=True,
                    dropout_masks_fn=masks_fn)

            grads = loss_gradients(model, objective)
            optimizer.step(model.params, grads)

        trace.train_loss.append(_base_loss(model, X_train, y_train, config,
                                           alpha_draws=train_draws))
        val_loss = _base_loss(model, X_val, y_val, config, alpha_draws=val_draws)
        trace.val_loss.append(val_loss)

        if config.track_coverage:
            for split_name, idx in (("train", dataset.splits["train"]),
                                    ("test", test_rows)):
                if idx is None:
                    continue
                rows = _coverage_by_group(model, dataset.X[idx], dataset.y[idx],
                                          None if group is None else group[idx],
                                          config.alpha)
                for g, cov in rows:
                    trace.coverage_rows.append((epoch, split_name, g, cov))

        if val_loss < best_val:
            best_val = val_loss
            trace.best_epoch = epoch
            best_params = model.copy_params()
        elif epoch - trace.best_epoch >= config.patience:
            break

    model.set_params(best_params)
    return model, trace


def predict_intervals(model: Mlp, X: np.ndarray, y: np.ndarray, alpha: float,
                      scaler=None) -> IntervalBatch:
    """Eval-mode intervals at the target level, in original y units.

    `X` must be on the scale the model was trained on; `y` in original
    units when a scaler is given. Crossed endpoints are swapped so the
    reported interval is always valid.
    """
    lo = model.forward(X, alpha / 2.0)
    hi = model.forward(X, 1.0 - alpha / 2.0)
    if scaler is not None:
        lo = scaler.inverse_y(lo)
        hi = scaler.inverse_y(hi)
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    return IntervalBatch(lo, hi, np.asarray(y, dtype=np.float64))


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)
