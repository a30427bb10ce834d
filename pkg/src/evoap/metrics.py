"""Pair-counting agreement scores and track statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError
from .solution import ClusteringSolution


def _pair_counts(truth, pred):
    """Counts of point pairs from the contingency table:
    (same in both, same in truth, same in pred, total pairs)."""
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError("label vectors must be 1-D and of equal length")
    n = truth.size
    if n < 2:
        raise UndefinedMetricError(f"need at least 2 points, got {n}")
    _, ti = np.unique(truth, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    table = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)

    def c2(x):
        return int((x * (x - 1) // 2).sum())

    return c2(table), c2(table.sum(axis=1)), c2(table.sum(axis=0)), n * (n - 1) // 2


def rand_index(truth, pred) -> float:
    """Fraction of point pairs on which the two labelings agree."""
    both, same_t, same_p, total = _pair_counts(truth, pred)
    diff_both = total - same_t - same_p + both
    return (both + diff_both) / total


def modified_rand(truth, pred) -> float:
    """Half the precision of predicted same-cluster pairs plus half the
    precision of predicted different-cluster pairs."""
    both, same_t, same_p, total = _pair_counts(truth, pred)
    diff_p = total - same_p
    if same_p == 0:
        raise UndefinedMetricError("prediction has no same-cluster pair (same-pair term undefined)")
    if diff_p == 0:
        raise UndefinedMetricError("prediction has no different-cluster pair (different-pair term undefined)")
    diff_both = total - same_t - same_p + both
    return both / (2 * same_p) + diff_both / (2 * diff_p)


def _scored(truth_labels, labeled, sol: ClusteringSolution, t: int):
    pred = sol.labels_at(t)
    mask = labeled[t] & (pred >= 0)
    return truth_labels[t][mask], pred[mask]


def rand_series(truth_labels: np.ndarray, labeled: np.ndarray, sol: ClusteringSolution) -> np.ndarray:
    """Rand index per time step over points that are active and labeled
    (NaN where fewer than two such points exist)."""
    out = np.full(sol.T, np.nan)
    for t in range(sol.T):
        a, b = _scored(truth_labels, labeled, sol, t)
        if a.size >= 2:
            out[t] = rand_index(a, b)
    return out


def modified_rand_series(truth_labels, labeled, sol: ClusteringSolution) -> np.ndarray:
    out = np.full(sol.T, np.nan)
    for t in range(sol.T):
        a, b = _scored(truth_labels, labeled, sol, t)
        if a.size < 2:
            continue
        try:
            out[t] = modified_rand(a, b)
        except UndefinedMetricError:
            pass
    return out


@dataclass(frozen=True)
class TrackStats:
    clusters_per_t: list
    distinct_exemplars_total: int
    membership_change_rate_per_t: list  # entry t: change between t-1 and t; first is None
    births: list  # (track id, 1-based t)
    deaths: list

    @property
    def mean_clusters(self) -> float:
        return float(np.mean(self.clusters_per_t)) if self.clusters_per_t else 0.0

    def count_summary(self) -> str:
        """``distinct (mean clusters per step)``, e.g. ``3 (2.64)``."""
        return f"{self.distinct_exemplars_total} ({self.mean_clusters:.2f})"


def track_stats(sol: ClusteringSolution) -> TrackStats:
    clusters = [len(sol.exemplars_at(t)) for t in range(sol.T)]
    distinct = len({e for t in range(sol.T) for e in sol.exemplars_at(t)})
    change = [None]
    for t in range(1, sol.T):
        both = [i for i in range(sol.N) if sol.track[t][i] is not None and sol.track[t - 1][i] is not None]
        if not both:
            change.append(None)
            continue
        moved = sum(sol.track[t][i] != sol.track[t - 1][i] for i in both)
        change.append(moved / len(both))
    births = [(tr.id, tr.birth) for tr in sol.tracks if tr.birth > 1]
    deaths = [(tr.id, tr.death) for tr in sol.tracks if tr.death is not None]
    return TrackStats(clusters, distinct, change, births, deaths)


def count_summary(distinct: int, mean_clusters: float) -> str:
    return f"{distinct} ({mean_clusters:.2f})"
