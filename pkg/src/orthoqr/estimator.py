"""Scikit-learn style front end for penalized quantile regression."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .conformal import CalibrationResult, calibrate
from .datagen import Dataset, Scaler, preprocess, split
from .losses import IntervalBatch
from .training import TrainConfig, predict_intervals, train


class OrthogonalQuantileRegressor(BaseEstimator):
    """Neural quantile regression with an interval-length/coverage
    independence penalty.

    Fits low and high conditional quantile estimates at levels alpha/2
    and 1 - alpha/2 and returns the interval between them. `penalty`
    selects the dependence measure added to the quantile loss ("none"
    recovers plain quantile regression).

    Parameters mirror `TrainConfig`; features and response are z-scored
    internally with statistics from the training portion.
    """

    def __init__(self, alpha=0.1, loss="pinball", penalty="none", gamma=0.0,
                 batch_size=1024, lr=1e-3, max_epochs=10_000, patience=200,
                 val_fraction=0.1, architecture="synthetic", random_state=0):
        self.alpha = alpha
        self.loss = loss
        self.penalty = penalty
        self.gamma = gamma
        self.batch_size = batch_size
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.architecture = architecture
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        dataset = Dataset(X, y)
        dataset = split(dataset, {"train": 1.0 - self.val_fraction,
                                  "val": self.val_fraction}, seed=self.random_state)
        dataset = preprocess(dataset)
        config = TrainConfig(loss=self.loss, penalty=self.penalty,
                             gamma=self.gamma, alpha=self.alpha,
                             batch_size=self.batch_size, lr=self.lr,
                             max_epochs=self.max_epochs, patience=self.patience,
                             seed=self.random_state,
                             architecture=self.architecture,
                             track_coverage=False)
        self.model_, self.trace_ = train(dataset, config)
        self.scaler_: Scaler = dataset.scaler
        self.n_features_in_ = X.shape[1]
        self.conformal_ = None
        return self

    def _intervals(self, X, y=None) -> IntervalBatch:
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        y = np.zeros(X.shape[0]) if y is None else np.asarray(y, dtype=np.float64)
        return predict_intervals(self.model_, self.scaler_.transform_x(X), y,
                                 self.alpha, scaler=self.scaler_)

    def predict(self, X) -> np.ndarray:
        """(n, 2) array of interval endpoints in original response units."""
        check_is_fitted(self, "model_")
        batch = self._intervals(X)
        lo, hi = batch.lo, batch.hi
        if self.conformal_ is not None:
            lo, hi = lo - self.conformal_.Q, hi + self.conformal_.Q
        return np.column_stack([lo, hi])

    def conformalize(self, X_cal, y_cal) -> "OrthogonalQuantileRegressor":
        """Split-conformal correction from a held-out calibration set."""
        check_is_fitted(self, "model_")
        self.conformal_: CalibrationResult = calibrate(
            self._intervals(X_cal, y_cal), self.alpha)
        return self

    def score(self, X, y) -> float:
        """Empirical coverage of the predicted intervals."""
        intervals = self.predict(X)
        y = np.asarray(y, dtype=np.float64)
        return float(((intervals[:, 0] <= y) & (y <= intervals[:, 1])).mean())
