"""Points that are present for only part of the horizon.

Inserted points (active at t but not t-1) receive forward messages from a
neighbour during the forward sweep; deleted points (active at t but not t+1)
receive backward messages during the backward sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataseries import SimilarityTensor
from .errors import NoNeighborError
from .state import MessageState


@dataclass(frozen=True)
class ActivitySets:
    active: np.ndarray  # (T, N) bool

    @property
    def T(self) -> int:
        return self.active.shape[0]

    def V(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.active[t])

    def B(self, t: int) -> np.ndarray:
        """Points active at both t-1 and t."""
        if t == 0:
            return np.array([], dtype=np.int64)
        return np.flatnonzero(self.active[t] & self.active[t - 1])

    def D(self, t: int) -> np.ndarray:
        """Points active at both t and t+1."""
        if t >= self.T - 1:
            return np.array([], dtype=np.int64)
        return np.flatnonzero(self.active[t] & self.active[t + 1])

    def insertions(self, t: int) -> np.ndarray:
        if t == 0:
            return np.array([], dtype=np.int64)
        return np.flatnonzero(self.active[t] & ~self.active[t - 1])

    def deletions(self, t: int) -> np.ndarray:
        if t >= self.T - 1:
            return np.array([], dtype=np.int64)
        return np.flatnonzero(self.active[t] & ~self.active[t + 1])

    @property
    def full(self) -> bool:
        return bool(self.active.all())


def nn_insert_first_iter(b: int, t: int, sim: SimilarityTensor, candidates: np.ndarray) -> int:
    """Most similar candidate to ``b`` at t (lowest index on ties)."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        raise NoNeighborError(f"no candidate neighbour for point {b} at t={t + 1}")
    row = sim.s[t, b, candidates]
    return int(candidates[np.argmax(row)])


def nn_by_messages(x: int, t: int, state: MessageState, candidates, columns) -> int:
    """Candidate whose row of alpha+rho+delta+phi at t, restricted to
    ``columns``, is closest to the row of ``x`` in Euclidean norm."""
    candidates = np.asarray(candidates, dtype=np.int64)
    columns = np.asarray(columns, dtype=np.int64)
    if candidates.size == 0 or columns.size == 0:
        raise NoNeighborError(f"no neighbour for node {x} at t={t + 1}")
    sl = state.slices[t]
    cols = sl.positions(columns)
    rows = sl.positions(candidates)
    msum = sl.message_sum()
    diff = msum[np.ix_(rows, cols)] - msum[sl.pos(x), cols][None, :]
    diff = np.where(np.isfinite(diff), diff, 0.0)
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    return int(candidates[np.argmin(dist)])


def _seed(state: MessageState, t: int, neighbours: dict, kind: str) -> None:
    if not neighbours:
        return
    sl = state.slices[t]
    targets = sl.positions(neighbours.keys())
    sources = sl.positions(neighbours.values())
    sl.copy_from(targets, sources, (kind,))


def seed_insertion(state: MessageState, neighbours: dict, t: int) -> None:
    """delta rows/columns of each inserted point <- those of its neighbour."""
    _seed(state, t, neighbours, "delta")


def seed_deletion(state: MessageState, neighbours: dict, t: int) -> None:
    """phi rows/columns of each deleted point <- those of its neighbour."""
    _seed(state, t, neighbours, "phi")
