"""Hilbert-Schmidt Independence Criterion with Gaussian kernels.

Biased V-statistic estimator: HSIC(a, b) = tr(K H Q H) / n**2, where K
and Q are the Gaussian Gram matrices of a and b and H = I - (1/n) 1 1^T.
Bandwidths come from the median heuristic unless fixed in the config.
The same convention backs both the training penalty and the evaluation
metric.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HsicConfig:
    """Kernel bandwidths; None selects the median heuristic per vector."""
    sigma_a: float | None = None
    sigma_b: float | None = None


def median_bandwidth(v: np.ndarray) -> float:
    """Median of pairwise absolute differences over distinct pairs.

    Falls back to 1.0 for degenerate (constant) input.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("median_bandwidth needs at least 2 values")
    diffs = np.abs(v[:, None] - v[None, :])
    upper = diffs[np.triu_indices(v.size, k=1)]
    med = float(np.median(upper))
    return med if med > 0 else 1.0


def gaussian_gram(v: np.ndarray, sigma: float) -> np.ndarray:
    """k(x, x') = exp(-(x - x')**2 / (2 sigma**2))."""
    v = np.asarray(v, dtype=np.float64).ravel()
    d2 = (v[:, None] - v[None, :]) ** 2
    return np.exp(-d2 / (2.0 * sigma**2))


def hsic_estimate(a: np.ndarray, b: np.ndarray, config: HsicConfig = HsicConfig()) -> float:
    """Biased HSIC estimate of dependence between two scalar samples."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} != {b.size}")
    n = a.size
    if n < 2:
        raise ValueError("hsic_estimate needs at least 2 samples")
    sigma_a = config.sigma_a if config.sigma_a is not None else median_bandwidth(a)
    sigma_b = config.sigma_b if config.sigma_b is not None else median_bandwidth(b)
    K = gaussian_gram(a, sigma_a)
    Q = gaussian_gram(b, sigma_b)
    H = np.eye(n) - np.ones((n, n)) / n
    return float(np.trace(K @ H @ Q @ H) / n**2)
