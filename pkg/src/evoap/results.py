"""Result persistence: versioned JSON documents and CSV exports."""

from __future__ import annotations

import csv
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Union

import jsonschema
import numpy as np

from .dataseries import DatasetSeries
from .metrics import modified_rand_series, rand_series, track_stats
from .solution import ClusteringSolution

SCHEMA_VERSION = "1.0"
PathLike = Union[str, Path]

_TRACK = {
    "type": "object",
    "required": ["id", "kind", "exemplar", "birth", "death"],
    "properties": {
        "id": {"type": "string"},
        "kind": {"enum": ["consensus", "data-exemplar"]},
        "exemplar": {"type": "string"},
        "birth": {"type": "integer", "minimum": 1},
        "death": {"type": ["integer", "null"], "minimum": 2},
    },
    "additionalProperties": False,
}

_NUM_OR_NULL = {"type": ["number", "null"]}

RESULT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "schema_version", "algorithm", "dataset", "config", "iterations", "converged",
        "T", "N", "tracks", "assignments", "consensus", "metrics", "timestamp",
        "determinism_hash",
    ],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "algorithm": {"enum": ["ap", "eap", "eap-nocn"]},
        "dataset": {
            "type": "object",
            "required": ["source", "name", "fingerprint"],
            "properties": {
                "source": {"enum": ["csv", "synthetic"]},
                "name": {"type": "string"},
                "seed": {"type": ["integer", "null"]},
                "fingerprint": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
            },
        },
        "config": {"type": "object"},
        "iterations": {"type": "integer", "minimum": 0},
        "converged": {"type": "boolean"},
        "T": {"type": "integer", "minimum": 1},
        "N": {"type": "integer", "minimum": 1},
        "tracks": {"type": "array", "items": _TRACK},
        "assignments": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "required": ["exemplar", "track"],
                    "properties": {"exemplar": {"type": "string"}, "track": {"type": "string"}},
                },
            },
        },
        "consensus": {"type": "array", "items": {"type": "object"}},
        "metrics": {
            "type": "object",
            "required": ["distinct_exemplars", "mean_clusters", "clusters_per_t"],
            "properties": {
                "rand_mean": _NUM_OR_NULL,
                "modified_rand_mean": _NUM_OR_NULL,
                "rand_per_t": {"type": "array", "items": _NUM_OR_NULL},
                "modified_rand_per_t": {"type": "array", "items": _NUM_OR_NULL},
                "distinct_exemplars": {"type": "integer", "minimum": 0},
                "mean_clusters": {"type": "number"},
                "clusters_per_t": {"type": "array", "items": {"type": "integer"}},
            },
        },
        "timestamp": {"type": "string"},
        "determinism_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
    },
}


def dataset_fingerprint(ds: DatasetSeries) -> str:
    """SHA-256 over point ids, activity and features (NaN-safe)."""
    h = hashlib.sha256()
    h.update("\x1f".join(map(str, ds.point_ids)).encode())
    h.update(np.ascontiguousarray(ds.active).tobytes())
    h.update(np.ascontiguousarray(np.nan_to_num(ds.features, nan=0.0)).tobytes())
    return h.hexdigest()


def _nan_to_none(values) -> list:
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(values, dtype=float)]


def _mean_or_none(values) -> Optional[float]:
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    return float(values.mean()) if values.size else None


def solution_metrics(sol: ClusteringSolution, ds: DatasetSeries) -> dict:
    stats = track_stats(sol)
    out = {
        "distinct_exemplars": stats.distinct_exemplars_total,
        "mean_clusters": stats.mean_clusters,
        "clusters_per_t": list(stats.clusters_per_t),
        "membership_change_per_t": stats.membership_change_rate_per_t,
    }
    if ds.has_labels:
        r = rand_series(ds.labels, ds.labeled, sol)
        m = modified_rand_series(ds.labels, ds.labeled, sol)
        out.update(
            rand_mean=_mean_or_none(r),
            modified_rand_mean=_mean_or_none(m),
            rand_per_t=_nan_to_none(r),
            modified_rand_per_t=_nan_to_none(m),
        )
    return out


def _digest(doc: dict) -> str:
    body = {k: v for k, v in doc.items() if k not in ("timestamp", "determinism_hash")}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def result_document(
    sol: ClusteringSolution,
    ds: DatasetSeries,
    dataset: dict,
    config: dict,
    timestamp: Optional[str] = None,
) -> dict:
    """Assemble the result JSON document. ``dataset`` carries ``source``,
    ``name`` and optionally ``seed``; the fingerprint is added here."""
    assignments = []
    for t in range(sol.T):
        assignments.append(
            {
                str(pid): {"exemplar": sol.exemplar[t][i], "track": sol.track[t][i]}
                for i, pid in enumerate(sol.point_ids)
                if sol.exemplar[t][i] is not None
            }
        )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "algorithm": sol.algorithm,
        "dataset": {**dataset, "fingerprint": dataset_fingerprint(ds)},
        "config": config,
        "iterations": int(sol.iterations),
        "converged": bool(sol.converged),
        "T": sol.T,
        "N": sol.N,
        "tracks": [
            {"id": tr.id, "kind": tr.kind, "exemplar": tr.exemplar, "birth": tr.birth, "death": tr.death}
            for tr in sol.tracks
        ],
        "assignments": assignments,
        "consensus": sol.consensus,
        "metrics": solution_metrics(sol, ds),
    }
    doc["timestamp"] = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    doc["determinism_hash"] = _digest(doc)
    return doc


def validate_result(doc: dict) -> None:
    """Schema check plus the cross-references a schema cannot express:
    assignments name existing tracks, and each track covers exactly the
    contiguous steps [birth, death)."""
    jsonschema.validate(doc, RESULT_SCHEMA)
    if len(doc["assignments"]) != doc["T"]:
        raise jsonschema.ValidationError(f"expected {doc['T']} assignment maps")
    spans = {tr["id"]: tr for tr in doc["tracks"]}
    seen: dict[str, set] = {k: set() for k in spans}
    for t, step in enumerate(doc["assignments"], start=1):
        for pid, a in step.items():
            if a["track"] not in spans:
                raise jsonschema.ValidationError(f"t={t}: point {pid} references unknown track {a['track']}")
            seen[a["track"]].add(t)
    for tid, tr in spans.items():
        end = tr["death"] if tr["death"] is not None else doc["T"] + 1
        if seen[tid] != set(range(tr["birth"], end)):
            raise jsonschema.ValidationError(f"track {tid} is not used on exactly [{tr['birth']}, {end})")
    if _digest(doc) != doc["determinism_hash"]:
        raise jsonschema.ValidationError("determinism_hash does not match document body")


def write_json(doc: dict, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n")
    return path


def load_result(path: PathLike) -> dict:
    doc = json.loads(Path(path).read_text())
    validate_result(doc)
    return doc


def _write_rows(path: PathLike, header: list, rows: Iterable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if not np.isfinite(x) else repr(x)
    return str(x)


def write_assignments_csv(sol: ClusteringSolution, path: PathLike) -> Path:
    rows = (
        (t + 1, pid, sol.exemplar[t][i], sol.track[t][i])
        for t in range(sol.T)
        for i, pid in enumerate(sol.point_ids)
        if sol.exemplar[t][i] is not None
    )
    return _write_rows(path, ["t", "point_id", "exemplar", "track"], rows)


def write_metrics_csv(doc: dict, path: PathLike) -> Path:
    """Per-time metrics of one result document."""
    m = doc["metrics"]
    T = doc["T"]
    rand = m.get("rand_per_t") or [None] * T
    mod = m.get("modified_rand_per_t") or [None] * T
    rows = (
        (t + 1, m["clusters_per_t"][t], _fmt(rand[t]), _fmt(mod[t]), _fmt(m["membership_change_per_t"][t]))
        for t in range(T)
    )
    return _write_rows(path, ["t", "clusters", "rand", "modified_rand", "membership_change"], rows)


def write_plot_data(series: dict, path: PathLike) -> Path:
    """Long format ``t, algorithm, rand`` from {algorithm: per-t values}."""
    rows = (
        (t + 1, name, _fmt(v))
        for name, values in series.items()
        for t, v in enumerate(values)
    )
    return _write_rows(path, ["t", "algorithm", "rand"], rows)


COMPARE_HEADER = [
    "algorithm", "dataset", "runs", "rand_mean", "modified_rand_mean",
    "distinct_exemplars", "mean_clusters", "counts", "converged",
]


def write_compare_csv(rows: list, path: PathLike) -> Path:
    return _write_rows(path, COMPARE_HEADER, ([_fmt(r[k]) for k in COMPARE_HEADER] for r in rows))
