"""Training objectives: quantile losses, the smooth coverage indicator,
and the two orthogonality penalties.

Every function here is written against the dispatching helpers in
`autodiff`, so the same code evaluates on plain arrays and differentiates
on tape tensors. The combined objective adds `gamma * penalty(L, V)` to
the base quantile loss, where L is the vector of interval lengths and V
the smooth coverage indicator of the batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

SMOOTH_SLOPE = 5e3  # slope of the tanh step used for the coverage indicator


class NonFiniteLossError(RuntimeError):
    def __init__(self, batch_index: int):
        super().__init__(f"non-finite loss at batch index {batch_index}")
        self.batch_index = batch_index


@dataclass
class IntervalBatch:
    """Per-sample intervals with derived lengths and coverage indicators."""

    lo: np.ndarray
    hi: np.ndarray
    y: np.ndarray
    L: np.ndarray = field(init=False)
    V_hard: np.ndarray = field(init=False)
    V_smooth: np.ndarray = field(init=False)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64).ravel()
        self.hi = np.asarray(self.hi, dtype=np.float64).ravel()
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if not (self.lo.size == self.hi.size == self.y.size) or self.lo.size == 0:
            raise ValueError("lo, hi, y must share one nonzero length")
        self.L = self.hi - self.lo
        self.V_hard = ((self.lo <= self.y) & (self.y <= self.hi)).astype(np.float64)
        self.V_smooth = smooth_coverage(self.y, self.lo, self.hi)

    def __len__(self):
        return self.y.size

    def subset(self, idx) -> "IntervalBatch":
        return IntervalBatch(self.lo[idx], self.hi[idx], self.y[idx])


def pinball(y, yhat, alpha):
    """Check loss: alpha * (y - yhat) above the estimate, (1 - alpha) * (yhat - y) below."""
    residual = y - yhat
    return ad.maximum(alpha * residual, (alpha - 1.0) * residual)


def pinball_pair(y, f_lo, f_hi, alpha):
    """Two-headed pinball loss at levels alpha/2 and 1 - alpha/2."""
    return pinball(y, f_lo, alpha / 2.0) + pinball(y, f_hi, 1.0 - alpha / 2.0)


def interval_score(y, f_lo, f_hi, alpha):
    """Interval width plus (2/alpha)-scaled violations of either endpoint."""
    return (f_hi - f_lo) + (2.0 / alpha) * ad.relu(f_lo - y) + (2.0 / alpha) * ad.relu(y - f_hi)


def smooth_coverage(y, q_lo, q_hi, slope: float = SMOOTH_SLOPE):
    """Differentiable coverage indicator in (0, 1).

    (tanh(slope * min{y - q_lo, q_hi - y}) + 1) / 2; crosses 0.5 exactly
    at the interval endpoints.
    """
    if slope <= 0:
        raise ValueError("slope must be positive")
    margin = ad.minimum(y - q_lo, q_hi - y)
    return (ad.tanh(slope * margin) + 1.0) * 0.5


def penalty_corr(L, V):
    """|Pearson correlation| of lengths and coverage, population moments.

    Returns 0.0 when either vector has zero variance: a constant carries
    no exploitable dependence (and this avoids 0/0 on batches where every
    interval covers).
    """
    if ad.value_of(L).size != ad.value_of(V).size:
        raise ValueError("length mismatch between L and V")
    if ad.value_of(L).size < 2:
        raise ValueError("penalty_corr needs at least 2 samples")
    Lc = L - ad.mean(L)
    Vc = V - ad.mean(V)
    var_l = ad.mean(Lc * Lc)
    var_v = ad.mean(Vc * Vc)
    if float(ad.value_of(var_l)) == 0.0 or float(ad.value_of(var_v)) == 0.0:
        return 0.0
    return ad.absolute(ad.mean(Lc * Vc) / (ad.sqrt(var_l) * ad.sqrt(var_v)))


def _median_bandwidth_graph(v):
    """Median heuristic bandwidth with gradient flow through the median pair.

    Matches `hsic.median_bandwidth` in value (constant fallback 1.0 on
    degenerate input) but, on tape, the selected pairwise difference(s)
    keep their derivative so the full objective is consistent with
    finite differences.
    """
    vals = ad.value_of(v).ravel()
    rows, cols = np.triu_indices(vals.size, k=1)
    diff_vals = np.abs(vals[rows] - vals[cols])
    if float(np.median(diff_vals)) == 0.0:
        return 1.0
    if not isinstance(v, Tensor):
        return float(np.median(diff_vals))
    order = np.argsort(diff_vals, kind="stable")
    m = diff_vals.size
    mid = np.array([order[(m - 1) // 2], order[m // 2]])
    return ad.mean(ad.absolute(v[rows[mid]] - v[cols[mid]]))


def _hsic_graph(a, b):
    """Biased HSIC on tape with median-heuristic bandwidths."""
    n = ad.value_of(a).size
    sigma_a = _median_bandwidth_graph(a)
    sigma_b = _median_bandwidth_graph(b)

    def centered_gram(v, sigma):
        col = v.reshape(n, 1)
        row = v.reshape(1, n)
        K = ad.exp(-((col - row) ** 2) / (2.0 * sigma * sigma))
        # doubly centered: HKH
        return K - K.mean(axis=0, keepdims=True) - K.mean(axis=1, keepdims=True) + K.mean()

    Kc = centered_gram(a, sigma_a)
    Qc = centered_gram(b, sigma_b)
    return ad.total(Kc * Qc) / n**2


def penalty_hsic(L, V):
    """sqrt of the (clamped-at-zero) HSIC estimate of dependence."""
    if ad.value_of(L).size != ad.value_of(V).size:
        raise ValueError("length mismatch between L and V")
    if ad.value_of(L).size < 2:
        raise ValueError("penalty_hsic needs at least 2 samples")
    h = _hsic_graph(L, V)
    if isinstance(h, Tensor):
        # small epsilon keeps the sqrt gradient finite near zero
        return ad.sqrt(ad.relu(h) + 1e-12)
    return float(np.sqrt(max(float(h), 0.0)))


PENALTIES = {"corr": penalty_corr, "hsic": penalty_hsic}


def interval_score_risk(model, X, y, alpha_draws, params=None, train=False,
                        dropout_masks_fn=None):
    """Monte-Carlo interval-score risk with one sampled level per sample.

    `alpha_draws` holds the sampled miscoverage levels; each sample is
    scored at quantile levels (alpha_i/2, 1 - alpha_i/2) via two forward
    passes.
    """
    alpha_draws = np.asarray(alpha_draws, dtype=np.float64).ravel()
    masks_lo = dropout_masks_fn() if dropout_masks_fn else None
    masks_hi = dropout_masks_fn() if dropout_masks_fn else None
    f_lo = model.forward(X, alpha_draws / 2.0, params=params, train=train,
                         dropout_masks=masks_lo)
    f_hi = model.forward(X, 1.0 - alpha_draws / 2.0, params=params, train=train,
                         dropout_masks=masks_hi)
    return ad.mean(interval_score(y, f_lo, f_hi, alpha_draws))


def orthogonal_objective(model, X, y, loss_kind: str, penalty_kind: str,
                         gamma: float, alpha: float = 0.1,
                         slope: float = SMOOTH_SLOPE, alpha_draws=None,
                         params=None, train=False, dropout_masks_fn=None,
                         check_finite=True):
    """Base quantile loss plus gamma times the orthogonality penalty.

    For the pinball loss the effective multiplier is 0.1 * gamma. With
    the HSIC penalty, dependence is estimated on the first half of the
    batch only (the kernel cost is quadratic in the batch size). Returns
    a Tensor when tape `params` are supplied, else a float.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    if gamma > 0 and n < 2:
        raise ValueError("penalized objective needs a batch of size >= 2")

    def masks():
        return dropout_masks_fn() if dropout_masks_fn else None

    if loss_kind == "pinball":
        f_lo = model.forward(X, alpha / 2.0, params=params, train=train, dropout_masks=masks())
        f_hi = model.forward(X, 1.0 - alpha / 2.0, params=params, train=train, dropout_masks=masks())
        per_sample = pinball_pair(y, f_lo, f_hi, alpha)
        base = ad.mean(per_sample)
        effective_gamma = 0.1 * gamma
    elif loss_kind == "interval_score":
        if alpha_draws is None:
            raise ValueError("interval_score objective needs sampled levels")
        alpha_draws = np.asarray(alpha_draws, dtype=np.float64).ravel()
        f_lo_s = model.forward(X, alpha_draws / 2.0, params=params, train=train, dropout_masks=masks())
        f_hi_s = model.forward(X, 1.0 - alpha_draws / 2.0, params=params, train=train, dropout_masks=masks())
        per_sample = interval_score(y, f_lo_s, f_hi_s, alpha_draws)
        base = ad.mean(per_sample)
        effective_gamma = gamma
        # the penalty always acts on the target-level interval
        f_lo = model.forward(X, alpha / 2.0, params=params, train=train, dropout_masks=masks())
        f_hi = model.forward(X, 1.0 - alpha / 2.0, params=params, train=train, dropout_masks=masks())
    else:
        raise ValueError(f"unknown loss kind: {loss_kind!r}")

    if check_finite:
        values = ad.value_of(per_sample)
        if not np.all(np.isfinite(values)):
            raise NonFiniteLossError(int(np.flatnonzero(~np.isfinite(values))[0]))

    if gamma == 0 or penalty_kind in (None, "none"):
        return base

    L = f_hi - f_lo
    V = smooth_coverage(y, f_lo, f_hi, slope)
    if penalty_kind == "hsic":
        half = n // 2
        L, V = L[:half], V[:half]
    try:
        penalty = PENALTIES[penalty_kind](L, V)
    except KeyError:
        raise ValueError(f"unknown penalty kind: {penalty_kind!r}") from None
    return base + effective_gamma * penalty
