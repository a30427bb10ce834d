"""Seeded two-dimensional Gaussian benchmark series with ground truth.

Randomness comes from numpy's PCG64. Every draw uses its own stream, keyed
by ``SeedSequence([seed, scenario, t, purpose])``, so a given (seed,
scenario) always yields the same data on any platform.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from .dataseries import CsvSchema, DatasetSeries, save_csv
from .errors import DegenerateFeatureError

SCENARIOS = ("separated", "colliding", "cluster_change", "third_cluster")
_CODE = {name: k for k, name in enumerate(SCENARIOS)}

# stream purposes
_DRAW, _WALK, _SWITCH = 0, 1, 2


def _rng(seed: int, scenario: str, t: int, purpose: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), _CODE[scenario], int(t), purpose])
    return np.random.Generator(np.random.PCG64(ss))


def _round_robin(n: int, k: int = 2) -> np.ndarray:
    return np.arange(n) % k


def _sample(seed, scenario, means, covs, membership) -> DatasetSeries:
    """Draw one point per (t, i) from the component it belongs to at t.

    ``means``: (T, K, 2); ``covs``: (T,) isotropic variances;
    ``membership``: (T, N) component index.
    """
    T, N = membership.shape
    feats = np.empty((T, N, 2))
    for t in range(T):
        z = _rng(seed, scenario, t + 1, _DRAW).standard_normal((N, 2))
        feats[t] = means[t, membership[t]] + np.sqrt(covs[t]) * z
    return DatasetSeries(
        point_ids=[f"p{i:03d}" for i in range(N)],
        features=feats,
        active=np.ones((T, N), dtype=bool),
        labels=membership.astype(np.int64),
    )


def gen_separated(seed: int, n_points: int = 200, T: int = 40) -> DatasetSeries:
    """Two well separated components whose first mean coordinate takes a
    +-0.1 coin-flip random walk; variance 0.1 rising to 0.3 from t=19."""
    means = np.empty((T, 2, 2))
    means[0] = [[-4.0, 0.0], [4.0, 0.0]]
    for t in range(1, T):
        steps = _rng(seed, "separated", t + 1, _WALK).choice([-0.1, 0.1], size=2)
        means[t] = means[t - 1]
        means[t, :, 0] += steps
    covs = np.where(np.arange(1, T + 1) >= 19, 0.3, 0.1)
    membership = np.tile(_round_robin(n_points), (T, 1))
    return _sample(seed, "separated", means, covs, membership)


def _colliding_means(T: int, extra: bool = False) -> np.ndarray:
    k = 3 if extra else 2
    means = np.empty((T, k, 2))
    base = [[-3.0, -3.0], [3.0, 3.0]] + ([[-3.0, -3.0]] if extra else [])
    means[0] = base
    for t in range(1, T):
        means[t] = means[t - 1]
        if 2 <= t + 1 <= 9:
            means[t, 0] += 0.4
    return means


def gen_colliding(seed: int, n_points: int = 200, T: int = 25) -> DatasetSeries:
    """Unit-variance components; the first moves by (0.4, 0.4) at t=2..9 and
    then stays at (0.2, 0.2)."""
    membership = np.tile(_round_robin(n_points), (T, 1))
    return _sample(seed, "colliding", _colliding_means(T), np.ones(T), membership)


def _defect(seed, scenario, T, n_points, target, p=0.25, steps=(10, 11)) -> np.ndarray:
    membership = np.tile(_round_robin(n_points), (T, 1))
    current = membership[0].copy()
    for t in range(T):
        if t + 1 in steps:
            u = _rng(seed, scenario, t + 1, _SWITCH).random(n_points)
            current = np.where((current == 1) & (u < p), target, current)
        membership[t] = current
    return membership


def gen_cluster_change(seed: int, n_points: int = 200, T: int = 25) -> DatasetSeries:
    """As the colliding series, but second-component points switch to the
    first with probability 0.25 at t=10 and again at t=11."""
    membership = _defect(seed, "cluster_change", T, n_points, target=0)
    return _sample(seed, "cluster_change", _colliding_means(T), np.ones(T), membership)


def gen_third_cluster(seed: int, n_points: int = 200, T: int = 25) -> DatasetSeries:
    """As the colliding series, but second-component points defect with
    probability 0.25 at t=10 and t=11 to a new component centred at (-3, -3)."""
    membership = _defect(seed, "third_cluster", T, n_points, target=2)
    return _sample(seed, "third_cluster", _colliding_means(T, extra=True), np.ones(T), membership)


GENERATORS = {
    "separated": gen_separated,
    "colliding": gen_colliding,
    "cluster_change": gen_cluster_change,
    "third_cluster": gen_third_cluster,
}


def canonical_scenario(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    if key not in GENERATORS:
        raise ValueError(f"unknown synthetic scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return key


def generate(name: str, seed: int, **overrides) -> DatasetSeries:
    return GENERATORS[canonical_scenario(name)](seed, **overrides)


def normalize_synthetic(ds: DatasetSeries) -> DatasetSeries:
    """Subtract each feature's mean over all points and times, then divide by
    its standard deviation."""
    feats = ds.features
    out = np.full_like(feats, np.nan)
    mask = ds.active
    for f in range(feats.shape[2]):
        col = feats[..., f][mask]
        n = col.size
        mu = col.sum() / n
        sd = np.sqrt(((col - mu) ** 2).sum() / n)
        if not sd > 0:
            raise DegenerateFeatureError(f"feature {f} has zero variance", dimension=f)
        out[..., f][mask] = (col - mu) / sd
    return ds.with_features(out)


def dump_csv(ds: DatasetSeries, path: Union[str, Path]) -> None:
    save_csv(ds, path, CsvSchema(feature_cols=[f"x{f + 1}" for f in range(ds.F)]))
