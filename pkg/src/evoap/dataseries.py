"""Temporal dataset representation, CSV ingestion, feature transforms and
similarity/preference construction."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DegenerateFeatureError,
    DuplicateError,
    EmptyDatasetError,
    InsufficientDataError,
    SchemaError,
    UndefinedMinimumError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DatasetSeries:
    """N named points observed over T time steps.

    ``features`` has shape (T, N, F) and holds NaN wherever a point is inactive.
    ``labels`` (optional) has shape (T, N); ``labeled`` marks which cells carry
    a ground-truth label. ``imputed`` flags feature cells filled in from a
    neighbouring time step.
    """

    point_ids: list
    features: np.ndarray
    active: np.ndarray
    labels: Optional[np.ndarray] = None
    labeled: Optional[np.ndarray] = None
    imputed: Optional[np.ndarray] = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        active = np.asarray(self.active, dtype=bool)
        if feats.ndim != 3:
            raise SchemaError(f"features must be (T, N, F), got shape {feats.shape}")
        T, N, F = feats.shape
        if F < 1:
            raise SchemaError("feature dimension must be >= 1")
        if active.shape != (T, N):
            raise SchemaError(f"active must be {(T, N)}, got {active.shape}")
        if len(self.point_ids) != N:
            raise SchemaError("point_ids length does not match features")
        if len(set(self.point_ids)) != N:
            raise DuplicateError("point ids must be unique")
        present = ~np.isnan(feats).any(axis=2)
        if np.any(active & ~present):
            raise SchemaError("active cells must carry a full feature vector")
        if np.any(~active & ~np.isnan(feats).all(axis=2)):
            raise SchemaError("inactive cells must not carry features")
        if N and not active.any(axis=0).all():
            bad = [self.point_ids[i] for i in np.flatnonzero(~active.any(axis=0))]
            raise SchemaError(f"points never active: {bad[:5]}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "point_ids", list(self.point_ids))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (T, N):
                raise SchemaError(f"labels must be {(T, N)}, got {labels.shape}")
            labeled = (
                np.asarray(self.labeled, dtype=bool)
                if self.labeled is not None
                else active.copy()
            )
            object.__setattr__(self, "labels", labels)
            object.__setattr__(self, "labeled", labeled & active)
        elif self.labeled is not None:
            object.__setattr__(self, "labeled", None)
        if self.imputed is None:
            object.__setattr__(self, "imputed", np.zeros((T, N, F), dtype=bool))
        else:
            object.__setattr__(self, "imputed", np.asarray(self.imputed, dtype=bool))

    @property
    def T(self) -> int:
        return self.features.shape[0]

    @property
    def N(self) -> int:
        return self.features.shape[1]

    @property
    def F(self) -> int:
        return self.features.shape[2]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def with_features(self, features: np.ndarray) -> "DatasetSeries":
        return replace(self, features=features)

    def equals(self, other: "DatasetSeries") -> bool:
        if self.point_ids != other.point_ids:
            return False
        if self.features.shape != other.features.shape:
            return False
        if not np.array_equal(self.features, other.features, equal_nan=True):
            return False
        if not np.array_equal(self.active, other.active):
            return False
        if not np.array_equal(self.imputed, other.imputed):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        if self.labels is not None:
            lab = self.labeled
            if not np.array_equal(lab, other.labeled):
                return False
            if not np.array_equal(self.labels[lab], other.labels[lab]):
                return False
        return True


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`load_csv`.

    ``feature_cols=None`` takes every column that is not the id, time or label
    column, in file order. ``label_col`` is optional; it is used only if the
    column exists.
    """

    id_col: str = "id"
    time_col: str = "t"
    feature_cols: Optional[Sequence[str]] = None
    label_col: Optional[str] = "label"


def _parse_float(text: str) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na"):
        return float("nan")
    return float(text)


def load_csv(path: Union[str, Path], schema: CsvSchema = CsvSchema()) -> DatasetSeries:
    """Read rows of ``(point_id, t, f_1..f_F[, label])``.

    A point is active at t iff a row for (id, t) exists. Empty feature cells in
    an existing row are imputed from the last known value of that point (or the
    first known value if nothing precedes it) and flagged in ``imputed``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDatasetError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")

    def col(name):
        try:
            return header.index(name)
        except ValueError:
            raise SchemaError(f"{path}: missing column {name!r}") from None

    id_idx, t_idx = col(schema.id_col), col(schema.time_col)
    label_idx = None
    if schema.label_col is not None and schema.label_col in header:
        label_idx = header.index(schema.label_col)
    if schema.feature_cols is None:
        skip = {id_idx, t_idx, label_idx}
        feat_idx = [k for k in range(len(header)) if k not in skip]
    else:
        feat_idx = [col(c) for c in schema.feature_cols]
    if not feat_idx:
        raise SchemaError(f"{path}: no feature columns")

    order: dict = {}
    records = {}
    t_max = 0
    for lineno, row in enumerate(rows, start=2):
        width = len(row)
        needed = max([id_idx, t_idx] + feat_idx)
        if width <= needed or (label_idx is not None and width <= label_idx):
            raise SchemaError(
                f"{path}:{lineno}: expected {len(header)} columns, got {width}"
            )
        extra = [c for c in row[len(header):] if c.strip()]
        if extra:
            raise SchemaError(f"{path}:{lineno}: inconsistent feature dimension")
        pid = row[id_idx].strip()
        try:
            t = int(row[t_idx])
        except ValueError:
            raise SchemaError(f"{path}:{lineno}: time must be an integer") from None
        if t < 1:
            raise SchemaError(f"{path}:{lineno}: time steps start at 1")
        if (pid, t) in records:
            raise DuplicateError(f"{path}:{lineno}: duplicate row for ({pid}, {t})")
        feats = [_parse_float(row[k]) for k in feat_idx]
        label = None
        if label_idx is not None and row[label_idx].strip() != "":
            label = int(row[label_idx])
        order.setdefault(pid, len(order))
        records[(pid, t)] = (feats, label)
        t_max = max(t_max, t)

    point_ids = list(order)
    T, N, F = t_max, len(point_ids), len(feat_idx)
    features = np.full((T, N, F), np.nan)
    active = np.zeros((T, N), dtype=bool)
    labels = np.zeros((T, N), dtype=np.int64)
    labeled = np.zeros((T, N), dtype=bool)
    for (pid, t), (feats, label) in records.items():
        i = order[pid]
        features[t - 1, i] = feats
        active[t - 1, i] = True
        if label is not None:
            labels[t - 1, i] = label
            labeled[t - 1, i] = True

    features, imputed = _impute(features, active)
    return DatasetSeries(
        point_ids=point_ids,
        features=features,
        active=active,
        labels=labels if labeled.any() else None,
        labeled=labeled if labeled.any() else None,
        imputed=imputed,
    )


def _impute(features: np.ndarray, active: np.ndarray):
    """Fill NaN cells of active points: previous known value, else first known."""
    features = features.copy()
    missing = np.isnan(features) & active[:, :, None]
    T, N, F = features.shape
    for i, f in zip(*np.nonzero(missing.any(axis=0))):
        column = features[:, i, f]
        known = np.flatnonzero(active[:, i] & ~np.isnan(column))
        if known.size == 0:
            raise InsufficientDataError(
                f"point {i} has no observed value for feature {f}"
            )
        for t in np.flatnonzero(missing[:, i, f]):
            before = known[known < t]
            src = before[-1] if before.size else known[0]
            column[t] = column[src]
        features[:, i, f] = column
    return features, missing


def _format_float(x: float) -> str:
    return repr(float(x))


def save_csv(ds: DatasetSeries, path: Union[str, Path], schema: CsvSchema = CsvSchema()) -> None:
    """Write ``ds`` in the schema read by :func:`load_csv`.

    Imputed cells are written empty so that re-loading reproduces both the
    values and the imputation flags.
    """
    feature_cols = list(schema.feature_cols or [f"f{k + 1}" for k in range(ds.F)])
    if len(feature_cols) != ds.F:
        raise SchemaError("schema feature columns do not match dataset dimension")
    header = [schema.id_col, schema.time_col] + feature_cols
    with_labels = ds.has_labels and schema.label_col is not None
    if with_labels:
        header.append(schema.label_col)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(ds.T):
            for i in np.flatnonzero(ds.active[t]):
                cells = [
                    "" if ds.imputed[t, i, f] else _format_float(ds.features[t, i, f])
                    for f in range(ds.F)
                ]
                row = [ds.point_ids[i], t + 1] + cells
                if with_labels:
                    row.append(int(ds.labels[t, i]) if ds.labeled[t, i] else "")
                writer.writerow(row)


def normalize_global(ds: DatasetSeries) -> DatasetSeries:
    """Zero mean, unit (population) standard deviation per feature, pooled
    over every active (t, i) cell."""
    values = ds.features[ds.active]  # (n_active, F)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    for f in np.flatnonzero(~(std > 0)):
        raise DegenerateFeatureError(f"feature {f} has zero variance", dimension=int(f))
    return ds.with_features((ds.features - mean) / std)


def piecewise_normalized_derivative(
    ds: DatasetSeries, window: Union[int, Sequence[tuple]]
) -> DatasetSeries:
    """Turn raw series into per-window normalized first differences.

    ``window`` is either a window length (consecutive, non-overlapping chunks;
    a trailing partial chunk is dropped) or a list of ``(start, stop)`` raw
    time-index ranges (0-based, stop exclusive) of equal length. Each window
    becomes one output time step whose feature vector concatenates, per raw
    feature, the differences of consecutive observations standardized to zero
    mean and unit standard deviation. A point is active in a window only if it
    is observed at every raw step of that window.
    """
    if isinstance(window, (int, np.integer)):
        width = int(window)
        if width < 1:
            raise ValueError("window length must be positive")
        spans = [(s, s + width) for s in range(0, ds.T - width + 1, width)]
    else:
        spans = [(int(a), int(b)) for a, b in window]
    if not spans:
        raise InsufficientDataError("no complete window in the series")
    lengths = {b - a for a, b in spans}
    if len(lengths) != 1:
        raise SchemaError("all windows must have the same length")
    length = lengths.pop()
    if length < 3:
        raise InsufficientDataError(
            f"windows need >= 3 observations per point, got {length}"
        )
    if any(a < 0 or b > ds.T for a, b in spans):
        raise SchemaError("window outside the series")

    out_F = (length - 1) * ds.F
    features = np.full((len(spans), ds.N, out_F), np.nan)
    active = np.zeros((len(spans), ds.N), dtype=bool)
    for w, (a, b) in enumerate(spans):
        present = ds.active[a:b].all(axis=0)
        partial = ds.active[a:b].any(axis=0) & ~present
        if partial.any():
            log.info("window %d: %d partially observed points dropped", w, partial.sum())
        if not present.any():
            continue
        diffs = np.diff(ds.features[a:b, present], axis=0)  # (length-1, n, F)
        mean = diffs.mean(axis=0)
        std = diffs.std(axis=0)
        if np.any(std == 0):
            n_bad = int(np.count_nonzero((std == 0).any(axis=1)))
            raise DegenerateFeatureError(
                f"window {w}: constant derivative for {n_bad} point(s)"
            )
        normed = (diffs - mean) / std
        # (length-1, n, F) -> (n, F * (length-1)), feature-major blocks
        features[w, present] = normed.transpose(1, 2, 0).reshape(-1, out_F)
        active[w] = present

    keep = active.any(axis=0)
    labels = labeled = None
    if ds.has_labels:
        starts = [a for a, _ in spans]
        labels = ds.labels[starts][:, keep]
        labeled = (ds.labeled[starts] & active)[:, keep]
    return DatasetSeries(
        point_ids=[p for p, k in zip(ds.point_ids, keep) if k],
        features=features[:, keep],
        active=active[:, keep],
        labels=labels,
        labeled=labeled,
    )


@dataclass(frozen=True, eq=False)
class SimilarityTensor:
    """Per-time pairwise similarities over the data points of a series.

    ``s[t, i, j]`` is NaN when either point is inactive at t; absent pairs in
    sparse mode are ``-inf``. Diagonal entries hold preferences once
    :func:`set_preferences` has run (NaN before).
    """

    s: np.ndarray
    active: np.ndarray
    sparse: bool = False

    @property
    def T(self) -> int:
        return self.s.shape[0]

    @property
    def N(self) -> int:
        return self.s.shape[1]

    def at(self, t: int) -> np.ndarray:
        """Dense block over the points active at t."""
        idx = np.flatnonzero(self.active[t])
        return self.s[t][np.ix_(idx, idx)]

    @property
    def preferences(self) -> np.ndarray:
        return np.einsum("tii->ti", self.s)


def build_similarity(ds: DatasetSeries, neighbors: Optional[int] = None) -> SimilarityTensor:
    """Negative squared Euclidean similarities per time step.

    With ``neighbors=k`` only pairs where one point is among the other's k
    nearest neighbours are kept; the rest are set to -inf (sparse mode).
    """
    T, N = ds.T, ds.N
    s = np.full((T, N, N), np.nan)
    for t in range(T):
        idx = np.flatnonzero(ds.active[t])
        x = ds.features[t, idx]
        block = pairwise_similarity(x, x)
        np.fill_diagonal(block, np.nan)
        if neighbors is not None and len(idx) > 1:
            k = min(int(neighbors), len(idx) - 1)
            ranked = np.where(np.eye(len(idx), dtype=bool), -np.inf, block)
            nearest = np.argsort(-ranked, axis=1, kind="stable")[:, :k]
            keep = np.zeros_like(block, dtype=bool)
            np.put_along_axis(keep, nearest, True, axis=1)
            keep |= keep.T
            block = np.where(keep | np.eye(len(idx), dtype=bool), block, -np.inf)
        s[t][np.ix_(idx, idx)] = block
    return SimilarityTensor(s=s, active=ds.active.copy(), sparse=neighbors is not None)


def pairwise_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """-||a_i - b_j||^2 for every row pair, computed from explicit differences."""
    diff = a[:, None, :] - b[None, :, :]
    return -np.einsum("ijk,ijk->ij", diff, diff)


PreferenceMode = Union[str, float]


def parse_preference(text: PreferenceMode) -> PreferenceMode:
    """Accept ``per-time-min``, ``global-min``, ``const:X`` or a number."""
    if isinstance(text, (int, float)):
        return float(text)
    text = text.strip()
    if text in ("per-time-min", "global-min"):
        return text
    if text.startswith("const:"):
        text = text[len("const:"):]
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"unknown preference mode {text!r}") from None


def _offdiag_min(block: np.ndarray) -> float:
    n = block.shape[0]
    vals = block[~np.eye(n, dtype=bool)]
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return np.nan
    return float(vals.min())


def set_preferences(sim: SimilarityTensor, mode: PreferenceMode = "per-time-min") -> SimilarityTensor:
    mode = parse_preference(mode)
    T = sim.T
    if mode == "per-time-min":
        prefs = np.array([_offdiag_min(sim.at(t)) for t in range(T)])
        for t in np.flatnonzero(np.isnan(prefs)):
            raise UndefinedMinimumError(
                f"t={t + 1}: fewer than two active points, per-time minimum undefined"
            )
    elif mode == "global-min":
        mins = np.array([_offdiag_min(sim.at(t)) for t in range(T)])
        if np.all(np.isnan(mins)):
            raise UndefinedMinimumError("no off-diagonal similarities at any time")
        prefs = np.full(T, np.nanmin(mins))
    else:
        prefs = np.full(T, float(mode))
    s = sim.s.copy()
    for t in range(T):
        idx = np.flatnonzero(sim.active[t])
        s[t, idx, idx] = prefs[t]
    return SimilarityTensor(s=s, active=sim.active, sparse=sim.sparse)
