"""Synthetic two-group benchmark data, CSV ingestion and preprocessing.

The synthetic response is zero-mean Gaussian given the features, with a
scale that depends on group membership (feature 0): the 80% majority
group has scale 0.03 * beta.x while the minority group has scale
sqrt((0.03 * gamma.x)**2 + noise**2). That makes the exact conditional
quantiles available in closed form, which the oracle-interval checks
rely on.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.stats import norm

from ._random import substream

SYNTHETIC_DIM = 50
MAJORITY_PROB = 0.8
COEF_SCALE = 0.03
FEATURE_HIGH = 5.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the two-group generator; fully determined by `seed`."""

    n: int
    noise: float  # minority noise scale: 3 = Low, 10 = High
    seed: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")

    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit-norm coefficient vectors, drawn once per spec."""
        rng = substream(self.seed, "synthetic-coefficients")
        beta = rng.uniform(0.0, 1.0, SYNTHETIC_DIM)
        gamma = rng.uniform(0.0, 1.0, SYNTHETIC_DIM)
        return beta / np.linalg.norm(beta), gamma / np.linalg.norm(gamma)


@dataclass
class Scaler:
    """Training-set preprocessing state for features and response."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    log_y: bool = False
    y_min: float = 0.0  # training-set min used by the log transform

    def transform_x(self, X: np.ndarray) -> np.ndarray:
        return (X - self.x_mean) / self.x_std

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        if self.log_y:
            y = np.log(y - self.y_min + 1.0)
        return (y - self.y_mean) / self.y_std

    def inverse_y(self, y: np.ndarray) -> np.ndarray:
        y = y * self.y_std + self.y_mean
        if self.log_y:
            y = np.exp(y) - 1.0 + self.y_min
        return y


@dataclass
class Dataset:
    """Feature matrix, responses and (optional) group labels with splits."""

    X: np.ndarray
    y: np.ndarray
    group: np.ndarray | None = None
    splits: dict = field(default_factory=dict)
    scaler: Scaler | None = None
    name: str = "data"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ValueError("X must be (n, p) with matching y")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def rows(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.splits[split]
        return self.X[idx], self.y[idx]


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw the two-group dataset; feature 0 is the group indicator."""
    rng = substream(spec.seed, "synthetic-samples")
    beta, gamma = spec.directions()
    X = np.empty((spec.n, SYNTHETIC_DIM))
    X[:, 0] = (rng.random(spec.n) >= MAJORITY_PROB).astype(np.float64)
    X[:, 1:] = rng.uniform(0.0, FEATURE_HIGH, (spec.n, SYNTHETIC_DIM - 1))
    eps1 = rng.standard_normal(spec.n)
    eps2 = rng.standard_normal(spec.n)
    minority = X[:, 0] == 1.0
    y = np.where(minority,
                 COEF_SCALE * (X @ gamma) * eps1 + spec.noise * eps2,
                 COEF_SCALE * (X @ beta) * eps1)
    return Dataset(X, y, group=X[:, 0].copy(),
                   name=f"synthetic_noise_{spec.noise:g}")


def oracle_scale(X: np.ndarray, spec: SyntheticSpec) -> np.ndarray:
    """Conditional standard deviation of the response at each row."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    beta, gamma = spec.directions()
    minority = X[:, 0] == 1.0
    scale_major = COEF_SCALE * (X @ beta)
    scale_minor = np.sqrt((COEF_SCALE * (X @ gamma)) ** 2 + spec.noise**2)
    return np.where(minority, scale_minor, np.abs(scale_major))


def oracle_quantile(X: np.ndarray, tau: float, spec: SyntheticSpec) -> np.ndarray:
    """Exact conditional tau-quantile of the zero-mean Gaussian response."""
    return oracle_scale(X, spec) * norm.ppf(tau)


def oracle_interval(X: np.ndarray, alpha: float, spec: SyntheticSpec):
    """Interval with exact 1 - alpha conditional coverage."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    lo = oracle_quantile(X, alpha / 2.0, spec)
    hi = oracle_quantile(X, 1.0 - alpha / 2.0, spec)
    return lo, hi


def split(dataset: Dataset, fractions: dict, seed: int) -> Dataset:
    """Random disjoint partition into the named fractions (seeded)."""
    total = sum(fractions.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {total}")
    order = substream(seed, "split").permutation(dataset.n)
    names = list(fractions)
    sizes = [int(round(fractions[name] * dataset.n)) for name in names[:-1]]
    sizes.append(dataset.n - sum(sizes))
    splits, start = {}, 0
    for name, size in zip(names, sizes):
        splits[name] = np.sort(order[start:start + size])
        start += size
    return replace(dataset, splits=splits)


def preprocess(dataset: Dataset, log_transform_y: bool = False) -> Dataset:
    """Z-score X and y with training-set statistics (optional y log first).

    The log transform is y -> log(y - min_train(y) + 1). Statistics are
    stored so predictions can be mapped back to original units.
    """
    train = dataset.splits.get("train")
    if train is None or train.size == 0:
        raise ValueError("preprocess needs a nonempty training split")
    y = dataset.y.astype(np.float64).copy()
    y_min = float(np.min(y[train]))
    if log_transform_y:
        y = np.log(y - y_min + 1.0)
    x_mean = dataset.X[train].mean(axis=0)
    x_std = dataset.X[train].std(axis=0)
    dead = np.flatnonzero(x_std == 0.0)
    if dead.size:
        raise ValueError(f"zero-variance feature column {int(dead[0])}")
    y_std = float(y[train].std())
    if y_std == 0.0:
        raise ValueError("zero-variance response on the training split")
    scaler = Scaler(x_mean=x_mean, x_std=x_std, y_mean=float(y[train].mean()),
                    y_std=y_std, log_y=log_transform_y, y_min=y_min)
    X_new = scaler.transform_x(dataset.X)
    y_new = scaler.transform_y(dataset.y)
    return replace(dataset, X=X_new, y=y_new, scaler=scaler)


@dataclass(frozen=True)
class CsvSchema:
    """Explicit column mapping; the target is never inferred."""

    target: str
    group: str | None = None
    log_y: bool = False


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Parse a UTF-8, headered, numeric CSV into a Dataset."""
    frame = pd.read_csv(path, float_precision="round_trip")
    for column in [schema.target] + ([schema.group] if schema.group else []):
        if column not in frame.columns:
            raise ValueError(f"column {column!r} not found in {path}")
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = np.argwhere(numeric.isna().to_numpy() & ~frame.isna().to_numpy())
    if bad.size:
        row, col = bad[0]
        raise ValueError(
            f"non-numeric cell at row {row + 1}, column {frame.columns[col]!r} in {path}")
    if numeric.isna().to_numpy().any():
        row, col = np.argwhere(numeric.isna().to_numpy())[0]
        raise ValueError(f"missing value at row {row + 1}, column {frame.columns[col]!r} in {path}")
    y = numeric[schema.target].to_numpy(dtype=np.float64)
    group = numeric[schema.group].to_numpy(dtype=np.float64) if schema.group else None
    feature_cols = [c for c in numeric.columns if c not in (schema.target,)]
    X = numeric[feature_cols].to_numpy(dtype=np.float64)
    name = str(path).rsplit("/", 1)[-1].removesuffix(".csv")
    return Dataset(X, y, group=group, name=name)


def save_csv(dataset: Dataset, path) -> None:
    """Write features (x0..x{p-1}) and target y; floats use repr round-trip."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(dataset.p)] + ["y"])
        for i in range(dataset.n):
            writer.writerow([repr(float(v)) for v in dataset.X[i]]
                            + [repr(float(dataset.y[i]))])
