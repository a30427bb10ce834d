"""Clustering solutions: per-time exemplar assignments with stable tracks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class Track:
    id: str
    kind: str  # "consensus" or "data-exemplar"
    exemplar: str
    birth: int  # first time step (1-based)
    death: Optional[int]  # first step after the last one present; None if alive at T


@dataclass(eq=False)
class ClusteringSolution:
    """Per-time assignments of points to exemplars and tracks.

    ``exemplar[t][i]`` / ``track[t][i]`` are None where point i is inactive.
    Time steps in ``tracks`` are 1-based.
    """

    algorithm: str
    point_ids: list
    exemplar: list
    track: list
    tracks: list
    consensus: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    config: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.exemplar)

    @property
    def N(self) -> int:
        return len(self.point_ids)

    def active_at(self, t: int) -> np.ndarray:
        return np.array([e is not None for e in self.exemplar[t]])

    def labels_at(self, t: int) -> np.ndarray:
        """Integer track labels at t (-1 for inactive points)."""
        ids = {tr.id: k for k, tr in enumerate(self.tracks)}
        return np.array([-1 if tr is None else ids[tr] for tr in self.track[t]], dtype=np.int64)

    def exemplars_at(self, t: int) -> list:
        return sorted({e for e in self.exemplar[t] if e is not None})


def _segments(times: list) -> list:
    runs, start = [], times[0]
    for a, b in zip(times, times[1:]):
        if b != a + 1:
            runs.append((start, a))
            start = b
    runs.append((start, times[-1]))
    return runs


def build_solution(
    algorithm: str,
    point_ids: list,
    assignment: np.ndarray,
    node_name: Callable[[int], str],
    is_consensus: Callable[[int], bool],
    iterations: int = 0,
    converged: bool = True,
    consensus: Optional[list] = None,
    config: Optional[dict] = None,
) -> ClusteringSolution:
    """Turn a (T, N) array of exemplar node ids (-1 inactive) into a solution.

    A track is a maximal run of consecutive time steps over which one exemplar
    node is in use; a node that reappears after a gap opens a new track.
    """
    T, N = assignment.shape
    used: dict[int, list] = {}
    for t in range(T):
        for e in np.unique(assignment[t][assignment[t] >= 0]):
            used.setdefault(int(e), []).append(t)

    track_of: dict[tuple, str] = {}
    tracks = []
    for node in sorted(used):
        name = node_name(node)
        kind = "consensus" if is_consensus(node) else "data-exemplar"
        base = name if kind == "consensus" else f"D:{name}"
        for r, (a, b) in enumerate(_segments(used[node])):
            tid = base if r == 0 else f"{base}.{r + 1}"
            for t in range(a, b + 1):
                track_of[(node, t)] = tid
            tracks.append(Track(tid, kind, name, a + 1, b + 2 if b + 1 < T else None))
    tracks.sort(key=lambda tr: (tr.birth, tr.kind != "consensus", tr.id))

    exemplar = [[None] * N for _ in range(T)]
    track = [[None] * N for _ in range(T)]
    for t in range(T):
        for i in np.flatnonzero(assignment[t] >= 0):
            node = int(assignment[t, i])
            exemplar[t][i] = node_name(node)
            track[t][i] = track_of[(node, t)]
    return ClusteringSolution(
        algorithm=algorithm,
        point_ids=list(point_ids),
        exemplar=exemplar,
        track=track,
        tracks=tracks,
        consensus=consensus or [],
        iterations=iterations,
        converged=converged,
        config=config or {},
    )
