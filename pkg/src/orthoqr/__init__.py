"""Quantile regression with an independence penalty between interval
length and the coverage event, plus conditional-coverage metrics,
a synthetic two-group benchmark, and split-conformal calibration."""

from .conformal import CalibrationResult, calibrate, conformalize
from .datagen import (CsvSchema, Dataset, Scaler, SyntheticSpec,
                      generate_synthetic, load_csv, oracle_interval,
                      preprocess, split)
from .estimator import OrthogonalQuantileRegressor
from .hsic import HsicConfig, hsic_estimate, median_bandwidth
from .losses import (IntervalBatch, interval_score, orthogonal_objective,
                     penalty_corr, penalty_hsic, pinball, pinball_pair,
                     smooth_coverage)
from .nn import Adam, Mlp, loss_gradients
from .training import TrainConfig, TrainTrace, gamma_for, predict_intervals, train

__all__ = [
    "Adam", "CalibrationResult", "CsvSchema", "Dataset", "HsicConfig",
    "IntervalBatch", "Mlp", "OrthogonalQuantileRegressor", "Scaler",
    "SyntheticSpec", "TrainConfig", "TrainTrace", "calibrate", "conformalize",
    "gamma_for", "generate_synthetic", "hsic_estimate", "interval_score",
    "load_csv", "loss_gradients", "median_bandwidth", "oracle_interval",
    "orthogonal_objective", "penalty_corr", "penalty_hsic", "pinball",
    "pinball_pair", "predict_intervals", "preprocess", "smooth_coverage",
    "split", "train",
]
