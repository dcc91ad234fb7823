"""Split-conformal calibration of quantile-regression intervals.

Conformity scores E_i = max(lo_i - y_i, y_i - hi_i) measure how far each
calibration response falls outside (negative: inside) its interval. The
correction Q is the ceil((1 - alpha)(n + 1))-th smallest score; widening
every interval to [lo - Q, hi + Q] yields finite-sample marginal
coverage of at least 1 - alpha under exchangeability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import IntervalBatch


@dataclass(frozen=True)
class CalibrationResult:
    Q: float
    n_cal: int
    alpha: float


def calibrate(intervals: IntervalBatch, alpha: float) -> CalibrationResult:
    """Conformal correction from calibration-set intervals (original y units)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    n_cal = len(intervals)
    k = math.ceil((1.0 - alpha) * (n_cal + 1))
    if k > n_cal:
        raise ValueError(
            f"calibration set too small: need at least {math.ceil((1 - alpha) / alpha)} "
            f"samples for alpha={alpha}, got {n_cal}")
    scores = np.maximum(intervals.lo - intervals.y, intervals.y - intervals.hi)
    q = float(np.sort(scores)[k - 1])
    return CalibrationResult(Q=q, n_cal=n_cal, alpha=alpha)


def conformalize(intervals: IntervalBatch, result: CalibrationResult) -> IntervalBatch:
    """Widen (or shrink, if Q < 0) every interval by Q on each side."""
    return IntervalBatch(intervals.lo - result.Q, intervals.hi + result.Q, intervals.y)
