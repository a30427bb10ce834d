"""Per-time message storage for the evolutionary engine.

Every time step owns a :class:`TimeSlice` holding square message matrices
over exactly the nodes active at that step: data points present at t, then
live consensus nodes, in increasing global id. Data point i has global id i;
consensus nodes get ids >= N. Nothing is stored for inactive (node, t) pairs.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .dataseries import SimilarityTensor, pairwise_similarity

MESSAGE_TYPES = ("alpha", "rho", "delta", "phi")


class TimeSlice:
    __slots__ = ("t", "nodes", "index", "s", "alpha", "rho", "delta", "phi")

    def __init__(self, t: int, nodes: np.ndarray, s: np.ndarray):
        self.t = t
        self.nodes = np.asarray(nodes, dtype=np.int64)
        self.index = {int(n): p for p, n in enumerate(self.nodes)}
        m = len(self.nodes)
        self.s = np.array(s, dtype=float).reshape(m, m)
        self.alpha = np.zeros((m, m))
        self.rho = np.zeros((m, m))
        self.delta = np.zeros((m, m))
        self.phi = np.zeros((m, m))

    @property
    def m(self) -> int:
        return len(self.nodes)

    def __contains__(self, node) -> bool:
        return int(node) in self.index

    def pos(self, node) -> int:
        return self.index[int(node)]

    def positions(self, nodes: Iterable) -> np.ndarray:
        return np.array([self.index[int(n)] for n in nodes], dtype=np.int64)

    def message_sum(self) -> np.ndarray:
        return self.alpha + self.rho + self.delta + self.phi

    def _reindex(self, nodes: np.ndarray, source: np.ndarray, types=MESSAGE_TYPES + ("s",)):
        grid = np.ix_(source, source)
        for name in types:
            setattr(self, name, getattr(self, name)[grid])
        self.nodes = np.asarray(nodes, dtype=np.int64)
        self.index = {int(n): p for p, n in enumerate(self.nodes)}

    def insert_copy(self, node: int, src: int) -> int:
        """Add ``node`` with every row/column (messages and similarity) copied
        from ``src``; returns the new position. Similarity must be refreshed by
        the caller."""
        node = int(node)
        if node in self.index:
            raise KeyError(f"node {node} already present at t={self.t}")
        p = int(np.searchsorted(self.nodes, node))
        source = np.arange(self.m)
        source = np.insert(source, p, self.pos(src))
        nodes = np.insert(self.nodes, p, node)
        self._reindex(nodes, source)
        return p

    def remove(self, nodes: Iterable) -> None:
        drop = {int(n) for n in nodes if int(n) in self.index}
        if not drop:
            return
        keep = np.array([int(n) not in drop for n in self.nodes])
        self._reindex(self.nodes[keep], np.flatnonzero(keep))

    def copy_from(self, targets: np.ndarray, sources: np.ndarray, types: Iterable[str]) -> None:
        """Simultaneously overwrite rows and columns of ``targets`` (positions)
        with those of ``sources`` for the given message types; the diagonal
        entry of a target takes the source's diagonal entry."""
        mapping = np.arange(self.m)
        mapping[targets] = sources
        grid = np.ix_(mapping, mapping)
        for name in types:
            arr = getattr(self, name)
            setattr(self, name, arr[grid])


class MessageState:
    """alpha/rho/delta/phi for every time step plus the similarity blocks.

    ``gamma``/``omega`` parameterize the temporal factor; ``damping`` applies
    to all four message types.
    """

    def __init__(
        self,
        sim: SimilarityTensor,
        features: np.ndarray,
        gamma: float,
        omega: float,
        damping: float,
    ):
        self.T = sim.T
        self.n_data = sim.N
        self.gamma = float(gamma)
        self.omega = float(omega)
        self.damping = float(damping)
        self.features = features
        self.sparse = sim.sparse
        self.pref = np.full(self.T, np.nan)
        self.slices = []
        for t in range(self.T):
            idx = np.flatnonzero(sim.active[t])
            block = sim.at(t)
            if idx.size:
                self.pref[t] = float(np.min(np.diagonal(block)))
            self.slices.append(TimeSlice(t, idx, block))
        self.update_count = {name: 0 for name in MESSAGE_TYPES}
        self.branch_count = np.zeros(4, dtype=np.int64)

    def is_consensus(self, nodes) -> np.ndarray:
        return np.asarray(nodes) >= self.n_data

    def data_nodes(self, t: int) -> np.ndarray:
        nodes = self.slices[t].nodes
        return nodes[nodes < self.n_data]

    def consensus_nodes(self, t: int) -> np.ndarray:
        nodes = self.slices[t].nodes
        return nodes[nodes >= self.n_data]

    def node_features(self, t: int, nodes: np.ndarray, consensus_features) -> np.ndarray:
        out = np.empty((len(nodes), self.features.shape[2]))
        for r, n in enumerate(nodes):
            n = int(n)
            out[r] = self.features[t, n] if n < self.n_data else consensus_features(n, t)
        return out

    def refresh_similarity(self, t: int, node: int, vec: np.ndarray, consensus_features) -> None:
        """Recompute row/column of ``node`` at t against its new feature vector."""
        sl = self.slices[t]
        p = sl.pos(node)
        others = self.node_features(t, sl.nodes, consensus_features)
        row = pairwise_similarity(np.asarray(vec, dtype=float)[None, :], others)[0]
        row[p] = self.pref[t]
        sl.s[p, :] = row
        sl.s[:, p] = row

    def common(self, t0: int, t1: int):
        """Positions of the nodes present at both t0 and t1, in each slice.

        Returns ``None`` when both slices hold the same nodes in the same order
        (the common case, which allows whole-array operations).
        """
        a, b = self.slices[t0].nodes, self.slices[t1].nodes
        if a.shape == b.shape and np.array_equal(a, b):
            return None
        _, pa, pb = np.intersect1d(a, b, assume_unique=True, return_indices=True)
        return pa, pb

    def check_finite(self) -> int:
        """Number of non-finite message entries (0 for dense similarity)."""
        bad = 0
        for sl in self.slices:
            for name in MESSAGE_TYPES:
                bad += int(np.count_nonzero(~np.isfinite(getattr(sl, name))))
        return bad

    def temporal_bound_violations(self, tol: float = 1e-12) -> int:
        """Count delta/phi entries outside [-gamma+omega, gamma - omega*1(j data)]."""
        lo = -self.gamma + self.omega
        bad = 0
        for sl in self.slices:
            hi = np.where(self.is_consensus(sl.nodes), self.gamma, self.gamma - self.omega)
            for arr in (sl.delta, sl.phi):
                bad += int(np.count_nonzero((arr < lo - tol) | (arr > hi[None, :] + tol)))
        return bad
