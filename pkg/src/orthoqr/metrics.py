"""Conditional-coverage metrics for prediction intervals.

Marginal coverage and length, the two dependence metrics (|Pearson corr|
and sqrt-HSIC between interval length and the hard coverage indicator),
worst-slab coverage, and the two pairwise comparison metrics built on the
set of samples whose intervals grew the most between two algorithms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._random import substream
from .hsic import HsicConfig, hsic_estimate
from .losses import IntervalBatch, penalty_corr

REPORT_COLUMNS = ["dataset", "method", "seed", "coverage", "length", "corr",
                  "hsic", "wsc", "delta_wsc", "delta_ils", "delta_node"]


def coverage(intervals: IntervalBatch) -> float:
    """Fraction of responses inside their (closed) interval."""
    return float(intervals.V_hard.mean())


def mean_length(intervals: IntervalBatch) -> float:
    return float(intervals.L.mean())


def corr_metric(intervals: IntervalBatch) -> float:
    """|Pearson correlation| between length and the hard coverage indicator."""
    return float(penalty_corr(intervals.L, intervals.V_hard))


def hsic_metric(intervals: IntervalBatch, config: HsicConfig = HsicConfig()) -> float:
    """sqrt of the HSIC dependence between length and hard coverage."""
    h = hsic_estimate(intervals.L, intervals.V_hard, config)
    return float(np.sqrt(max(h, 0.0)))


def _min_window(values: np.ndarray, min_size: int) -> tuple:
    """Minimum mean over contiguous windows of at least `min_size` entries,
    returned as (mean, start, end).

    Binary search on the achievable mean; each feasibility check is a
    prefix scan, so the whole thing is O(n log(1/tol)). The final mean is
    recovered exactly from the achieving windows (exact for any n below
    ~3e4, where distinct window means differ by more than the search
    tolerance).
    """
    n = values.size
    if min_size > n:
        min_size = n
    prefix = np.concatenate([[0.0], np.cumsum(values)])
    positions = np.arange(n + 1, dtype=np.float64)
    # a window [s, e) of mean <= g exists iff slack[e] <= max_{s} slack[s]
    # where slack = prefix - g * positions and s ranges over [0, e - min_size]
    lo, hi = 0.0, float(values.max(initial=1.0))
    for _ in range(45):
        g = 0.5 * (lo + hi)
        slack = prefix - g * positions
        head_max = np.maximum.accumulate(slack[: n - min_size + 1])
        if np.any(slack[min_size:] - head_max <= 0.0):
            hi = g
        else:
            lo = g
    # recover the exact mean of a window certifying the bound
    g = hi * (1 + 1e-12) + 1e-15
    slack = prefix - g * positions
    head = slack[: n - min_size + 1]
    head_max = np.maximum.accumulate(head)
    new_max = head >= head_max
    head_idx = np.maximum.accumulate(np.where(new_max, np.arange(head.size), -1))
    ends = np.flatnonzero(slack[min_size:] - head_max <= 0.0) + min_size
    if ends.size == 0:  # numerically flat case: fall back to the full window
        return float(values.mean()), 0, n
    starts = head_idx[ends - min_size]
    means = (prefix[ends] - prefix[starts]) / (ends - starts)
    k = int(np.argmin(means))
    return float(means[k]), int(starts[k]), int(ends[k])


def _min_window_mean(values: np.ndarray, min_size: int) -> float:
    return _min_window(values, min_size)[0]


def wsc(X: np.ndarray, intervals: IntervalBatch, delta: float = 0.1,
        n_directions: int = 1000, seed: int = 0) -> float:
    """Worst coverage over any projection slab holding >= delta of the mass.

    Directions are uniform on the unit sphere; for each one, the samples
    are sorted by their projection and the contiguous window with minimal
    coverage among those of size >= delta * n is found exactly.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must be in (0, 1]")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, p = X.shape
    if n < 1.0 / delta:
        raise ValueError("need at least 1/delta samples")
    min_size = max(1, int(np.ceil(delta * n)))
    rng = substream(seed, "wsc-directions")
    directions = rng.standard_normal((n_directions, p))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    projections = X @ directions.T  # (n, n_directions)
    covered = intervals.V_hard
    worst = 1.0
    for d in range(n_directions):
        order = np.argsort(projections[:, d], kind="stable")
        worst = min(worst, _min_window_mean(covered[order], min_size))
        if worst == 0.0:
            break
    return worst


def wsc_unbiased(X: np.ndarray, intervals: IntervalBatch, delta: float = 0.1,
                 n_directions: int = 1000, seed: int = 0,
                 eval_fraction: float = 0.5) -> float:
    """Worst-slab coverage with the slab chosen on a held-out fit part.

    The plain minimum over all slabs is biased low by selection (roughly
    -0.04 at n = 10^4, delta = 0.1 even for coverage independent of X);
    the standard correction searches for the worst slab on one part of
    the data and reports its coverage on the rest.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must be in (0, 1]")
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError("eval_fraction must be in (0, 1)")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, p = X.shape
    fit_perm = substream(seed, "wsc-fit-split").permutation(n)
    n_fit = int(round((1.0 - eval_fraction) * n))
    fit, holdout = fit_perm[:n_fit], fit_perm[n_fit:]
    if n_fit < 1.0 / delta or holdout.size == 0:
        raise ValueError("need at least 1/delta samples in the fit part")
    min_size = max(1, int(np.ceil(delta * n_fit)))
    rng = substream(seed, "wsc-directions")
    directions = rng.standard_normal((n_directions, p))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    covered = intervals.V_hard
    proj_fit = X[fit] @ directions.T
    best_mean, best_slab = np.inf, None
    for d in range(n_directions):
        order = np.argsort(proj_fit[:, d], kind="stable")
        mean, start, end = _min_window(covered[fit][order], min_size)
        if mean < best_mean:
            sorted_proj = proj_fit[order, d]
            best_mean = mean
            best_slab = (d, sorted_proj[start], sorted_proj[end - 1])
    d, lo_p, hi_p = best_slab
    proj_eval = X[holdout] @ directions[d]
    inside = (proj_eval >= lo_p) & (proj_eval <= hi_p)
    if not inside.any():
        return best_mean
    return float(covered[holdout][inside].mean())


def delta_wsc(X: np.ndarray, intervals: IntervalBatch, delta: float = 0.1,
              n_directions: int = 1000, seed: int = 0) -> float:
    """|worst-slab coverage - marginal coverage| on the same samples."""
    return abs(wsc(X, intervals, delta, n_directions, seed) - coverage(intervals))


def ils_set(lengths_a: np.ndarray, lengths_b: np.ndarray) -> np.ndarray:
    """Indices of the ~10% of samples whose length grew most from b to a.

    The cut is the ceil(0.9 n)-th order statistic of the differences;
    ties at the cut are all kept.
    """
    lengths_a = np.asarray(lengths_a, dtype=np.float64).ravel()
    lengths_b = np.asarray(lengths_b, dtype=np.float64).ravel()
    if lengths_a.size != lengths_b.size:
        raise ValueError("length vectors must match")
    diff = lengths_a - lengths_b
    n = diff.size
    cut = np.sort(diff)[int(np.ceil(0.9 * n)) - 1]
    return np.flatnonzero(diff >= cut)


def delta_ils_coverage(intervals: IntervalBatch, ils: np.ndarray) -> float:
    """|coverage over the ILS samples - marginal coverage|."""
    ils = np.asarray(ils)
    if ils.size == 0:
        raise ValueError("empty ILS set")
    return abs(float(intervals.V_hard[ils].mean()) - coverage(intervals))


# -- depth-limited CART for the node-coverage metric -------------------


@dataclass
class TreeNode:
    indices: np.ndarray
    depth: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None


def _gini(pos: float, total: float) -> float:
    if total == 0:
        return 0.0
    q = pos / total
    return 2.0 * q * (1.0 - q)


def _best_split(X: np.ndarray, labels: np.ndarray, indices: np.ndarray):
    """Weighted-gini-minimizing (feature, midpoint threshold), or None."""
    n = indices.size
    y = labels[indices].astype(np.float64)
    best = (None, None, _gini(y.sum(), n))
    for j in range(X.shape[1]):
        col = X[indices, j]
        order = np.argsort(col, kind="stable")
        sorted_col, sorted_y = col[order], y[order]
        pos_left = np.cumsum(sorted_y)[:-1]
        counts_left = np.arange(1, n)
        boundary = sorted_col[:-1] < sorted_col[1:]
        if not boundary.any():
            continue
        gini_left = 2.0 * (pos_left / counts_left) * (1 - pos_left / counts_left)
        pos_right = y.sum() - pos_left
        counts_right = n - counts_left
        gini_right = 2.0 * (pos_right / counts_right) * (1 - pos_right / counts_right)
        score = (counts_left * gini_left + counts_right * gini_right) / n
        score = np.where(boundary, score, np.inf)
        k = int(np.argmin(score))
        if score[k] < best[2] - 1e-15:
            best = (j, 0.5 * (sorted_col[k] + sorted_col[k + 1]), float(score[k]))
    return best[:2] if best[0] is not None else None


def fit_tree(X: np.ndarray, labels: np.ndarray, max_depth: int = 3) -> list[TreeNode]:
    """Grow a gini CART up to `max_depth`; returns every node, root first."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(labels).astype(bool)
    root = TreeNode(indices=np.arange(labels.size), depth=0)
    nodes, frontier = [root], [root]
    while frontier:
        node = frontier.pop(0)
        if node.depth >= max_depth or node.indices.size < 2:
            continue
        node_labels = labels[node.indices]
        if node_labels.all() or not node_labels.any():
            continue
        found = _best_split(X, labels, node.indices)
        if found is None:
            continue
        j, threshold = found
        mask = X[node.indices, j] <= threshold
        node.feature, node.threshold = j, threshold
        node.left = TreeNode(indices=node.indices[mask], depth=node.depth + 1)
        node.right = TreeNode(indices=node.indices[~mask], depth=node.depth + 1)
        nodes += [node.left, node.right]
        frontier += [node.left, node.right]
    return nodes


def delta_node_coverage(X: np.ndarray, intervals: IntervalBatch,
                        ils: np.ndarray, max_depth: int = 3,
                        min_node_frac: float = 0.05) -> float:
    """Coverage deviation on the tree node most enriched for ILS samples.

    A CART classifier is fit on ILS membership; among nodes of depth <=
    `max_depth` holding >= `min_node_frac` of the samples, the one
    maximizing |node & ILS| / |node \\ ILS| is selected (empty
    denominators count as infinite; infinite ties go to the largest node).
    """
    n = len(intervals)
    if n < 20:
        raise ValueError("need at least 20 samples")
    member = np.zeros(n, dtype=bool)
    member[np.asarray(ils)] = True
    nodes = fit_tree(X, member, max_depth=max_depth)
    min_count = min_node_frac * n
    best_node, best_key = None, None
    for node in nodes:
        if node.indices.size < min_count:
            continue
        inside = int(member[node.indices].sum())
        outside = node.indices.size - inside
        ratio = np.inf if outside == 0 else inside / outside
        # rank by ratio, then by node size to stabilize infinite ties
        key = (ratio, node.indices.size)
        if best_key is None or key > best_key:
            best_node, best_key = node, key
    assert best_node is not None  # the root always qualifies
    node_cov = float(intervals.V_hard[best_node.indices].mean())
    return abs(node_cov - coverage(intervals))


# -- reporting ---------------------------------------------------------


def improvement_pct(baseline: float, treated: float):
    """Signed percent improvement for a lower-is-better metric."""
    if not np.isfinite(baseline):
        raise ValueError("baseline must be finite")
    if baseline == 0.0:
        return 0.0 if treated == 0.0 else "-inf"
    return 100.0 * (baseline - treated) / baseline


def aggregate(per_trial_rows: list[dict]) -> dict:
    """Per-metric mean and standard error (population std / sqrt(trials))."""
    if len(per_trial_rows) < 2:
        raise ValueError("aggregate needs at least 2 trials")
    keys = [k for k in per_trial_rows[0] if isinstance(per_trial_rows[0][k], (int, float))]
    out = {}
    for key in keys:
        values = np.array([row[key] for row in per_trial_rows], dtype=np.float64)
        out[key] = (float(values.mean()), float(values.std() / np.sqrt(values.size)))
    return out


def report_row(dataset: str, method: str, seed: int, X: np.ndarray,
               intervals: IntervalBatch, ils: np.ndarray | None = None,
               wsc_directions: int = 1000, wsc_seed: int = 0) -> dict:
    """One evaluation row with the fixed output schema."""
    slab = wsc(X, intervals, n_directions=wsc_directions, seed=wsc_seed)
    row = {
        "dataset": dataset,
        "method": method,
        "seed": seed,
        "coverage": coverage(intervals),
        "length": mean_length(intervals),
        "corr": corr_metric(intervals),
        "hsic": hsic_metric(intervals),
        "wsc": slab,
        "delta_wsc": abs(slab - coverage(intervals)),
        "delta_ils": float("nan"),
        "delta_node": float("nan"),
    }
    if ils is not None and len(ils):
        row["delta_ils"] = delta_ils_coverage(intervals, ils)
        row["delta_node"] = delta_node_coverage(X, intervals, ils)
    return row
