"""Consensus-node lifecycle: birth, evolution, death, revival and the
exemplar swap that keeps cluster tracks stable across iterations."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .state import MESSAGE_TYPES, MessageState


@dataclass
class ConsensusNode:
    node: int
    label: str
    birth_time: int
    birth_iteration: int
    parent: int
    features: dict = field(default_factory=dict)
    # time step -> iteration in which the node was marked dead there
    dead: dict = field(default_factory=dict)
    revivals: int = 0

    def is_dead(self, t: int) -> bool:
        return t in self.dead


class ConsensusRegistry:
    """All consensus nodes ever created, keyed by global node id."""

    def __init__(self, n_data: int):
        self.n_data = n_data
        self.nodes: dict[int, ConsensusNode] = {}
        self.next_id = n_data

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node) -> bool:
        return int(node) in self.nodes

    def __getitem__(self, node) -> ConsensusNode:
        return self.nodes[int(node)]

    def spawn(self, t: int, iteration: int, parent: int, features: np.ndarray) -> ConsensusNode:
        node = self.next_id
        self.next_id += 1
        rec = ConsensusNode(
            node=node,
            label=f"C{node - self.n_data + 1}",
            birth_time=t,
            birth_iteration=iteration,
            parent=int(parent),
            features={t: np.asarray(features, dtype=float)},
        )
        self.nodes[node] = rec
        return rec

    def features_of(self, node: int, t: int) -> np.ndarray:
        return self.nodes[int(node)].features[t]


def creation_trigger(exemplar_sets: Sequence, consensus_exists: bool) -> bool:
    """True once every time step has at least two exemplars and no consensus
    node exists yet."""
    if consensus_exists or not len(exemplar_sets):
        return False
    return all(ex is not None and len(ex) >= 2 for ex in exemplar_sets)


def _second_best(state: MessageState, t: int, node: int) -> Optional[int]:
    """Data node other than ``node`` with the largest message sum from ``node``."""
    sl = state.slices[t]
    p = sl.pos(node)
    cand = np.flatnonzero((sl.nodes < state.n_data) & (sl.nodes != node))
    if cand.size == 0:
        return None
    row = sl.alpha[p, cand] + sl.rho[p, cand] + sl.delta[p, cand] + sl.phi[p, cand]
    return int(cand[np.argmax(row)])


def _fix_availabilities(state: MessageState, t: int, node: int, src: int, y_pos: Optional[int]) -> None:
    sl = state.slices[t]
    pn, ps = sl.pos(node), sl.pos(src)
    sl.alpha[pn, ps] = sl.alpha[ps, y_pos] if y_pos is not None else 0.0
    sl.alpha[ps, pn] = 0.0


def seed_node(state: MessageState, registry: ConsensusRegistry, t: int, node: int, src: int) -> None:
    """Insert consensus ``node`` at t with messages inherited from ``src``.

    Rows and columns of all four message types are copied; the availability of
    ``src`` as exemplar for the new node takes src's evidence for its
    second-best exemplar, and the new node's availability towards ``src`` is 0.
    """
    sl = state.slices[t]
    y = _second_best(state, t, src)
    y_node = int(sl.nodes[y]) if y is not None else None
    sl.insert_copy(node, src)
    y_pos = sl.pos(y_node) if y_node is not None else None
    _fix_availabilities(state, t, node, src, y_pos)
    state.refresh_similarity(t, node, registry.features_of(node, t), registry.features_of)


def create_consensus_nodes(
    state: MessageState,
    registry: ConsensusRegistry,
    t: int,
    assignment: np.ndarray,
    iteration: int,
    min_cluster_size: int = 1,
    skip: frozenset = frozenset(),
) -> list:
    """Spawn a consensus node for every data exemplar at t whose cluster has at
    least ``min_cluster_size`` members. ``assignment`` (exemplar node id per
    data point, -1 when inactive) is updated in place so that the new node
    takes over the exemplar role. Returns the created records."""
    created = []
    data_exemplars, sizes = np.unique(assignment[(assignment >= 0) & (assignment < state.n_data)], return_counts=True)
    for ex, size in zip(data_exemplars, sizes):
        ex = int(ex)
        if size < min_cluster_size or ex in skip:
            continue
        members = np.flatnonzero(assignment == ex)
        mean = state.features[t, members].mean(axis=0)
        rec = registry.spawn(t, iteration, ex, mean)
        seed_node(state, registry, t, rec.node, ex)
        assignment[members] = rec.node
        created.append(rec)
    return created


def refresh_evolution(
    state: MessageState, registry: ConsensusRegistry, t: int, assignment: np.ndarray
) -> None:
    """Move every consensus exemplar at t to the mean of its members and
    recompute its similarities."""
    exemplars = np.unique(assignment[assignment >= state.n_data])
    for k in exemplars:
        members = np.flatnonzero(assignment == k)
        assert members.size, "consensus exemplar without members"
        mean = state.features[t, members].mean(axis=0)
        rec = registry[k]
        old = rec.features.get(t)
        if old is not None and np.array_equal(old, mean):
            continue
        rec.features[t] = mean
        state.refresh_similarity(t, int(k), mean, registry.features_of)


def process_deaths(
    state: MessageState, registry: ConsensusRegistry, exemplars, t: int, iteration: int
) -> list:
    """Consensus nodes present at t but not exemplars there die at t..T-1."""
    chosen = {int(e) for e in exemplars}
    dying = [int(k) for k in state.consensus_nodes(t) if int(k) not in chosen]
    for k in dying:
        rec = registry[k]
        for tt in range(t, state.T):
            state.slices[tt].remove([k])
            rec.features.pop(tt, None)
            rec.dead[tt] = iteration
    return dying


def _votes(members: np.ndarray, next_assignment, next_exemplars, sl) -> Counter:
    """How many of ``members`` chose each t+1 exemplar."""
    if next_assignment is None:
        return Counter()
    valid = set(int(e) for e in next_exemplars) if next_exemplars is not None else set()
    return Counter(
        int(e) for e in next_assignment[members] if int(e) in valid and int(e) in sl
    )


def _nearest(state: MessageState, t: int, mean: np.ndarray, exclude: set) -> Optional[int]:
    data = np.array([i for i in state.data_nodes(t) if int(i) not in exclude], dtype=np.int64)
    if data.size == 0:
        return None
    d2 = np.sum((state.features[t, data] - mean) ** 2, axis=1)
    return int(data[np.argmin(d2)])


def extend_to_next(
    state: MessageState,
    registry: ConsensusRegistry,
    t: int,
    assignment: np.ndarray,
    next_assignment: Optional[np.ndarray],
    next_exemplars,
    iteration: int,
    represented: Optional[set] = None,
) -> list:
    """Carry consensus exemplars at t over to t+1.

    A node absent at t+1 is replicated there if it never existed at t+1, or
    revived if it died at t+1 in the previous iteration. Its features at t+1
    are the mean of its t-members' t+1 vectors and its messages are inherited
    from the t+1 exemplar chosen by most of those members.

    Sources are matched one-to-one, strongest vote first, so two nodes never
    inherit the same messages. Exemplars whose cluster is already represented
    at t+1 (consensus nodes, or data nodes in ``represented`` that seeded a
    live consensus node there) are not available. A node left without a
    source is not replicated, unless t+1 has no assignment yet, the node is
    being revived, or all its members moved to consensus nodes at t+1 (it was
    swallowed). In those cases it inherits from the data point nearest to its
    new position. Returns
    ``(node, source)`` pairs, one per node seeded at t+1.
    """
    if t + 1 >= state.T:
        return []
    nxt = state.slices[t + 1]
    active_next = np.zeros(state.n_data, dtype=bool)
    active_next[state.data_nodes(t + 1)] = True
    blocked = set(represented or ())
    means, claims, swallowed = {}, [], set()
    for k in np.unique(assignment[assignment >= state.n_data]):
        k = int(k)
        if k in nxt:
            continue
        rec = registry[k]
        if rec.is_dead(t + 1) and rec.dead[t + 1] != iteration - 1:
            continue
        members = np.flatnonzero((assignment == k) & active_next)
        if members.size == 0:
            continue
        means[k] = state.features[t + 1, members].mean(axis=0)
        votes = _votes(members, next_assignment, next_exemplars, nxt)
        if votes and all(src >= state.n_data for src in votes):
            swallowed.add(k)
        for src, count in votes.items():
            claims.append((-count, k, src))
    claims.sort()

    source = {}
    taken = set(blocked)
    for _, k, src in claims:
        if k in source or src in taken or src >= state.n_data:
            continue
        source[k] = src
        taken.add(src)
    for k in sorted(means):
        if k not in source and (
            next_assignment is None or registry[k].is_dead(t + 1) or k in swallowed
        ):
            src = _nearest(state, t + 1, means[k], taken)
            if src is not None:
                source[k] = src
                taken.add(src)

    pairs = []
    for k in sorted(source):
        rec = registry[k]
        if rec.is_dead(t + 1):
            del rec.dead[t + 1]
            rec.revivals += 1
        rec.features[t + 1] = means[k]
        seed_node(state, registry, t + 1, k, source[k])
        pairs.append((k, source[k]))
    return pairs


def consensus_self_swap(
    state: MessageState, registry: ConsensusRegistry, t: int, swaps, assignment: np.ndarray
) -> None:
    """Consensus node k that picked data point i takes over i's messages and
    i's members. ``swaps`` is a list of (k, i) node-id pairs."""
    sl = state.slices[t]
    for k, i in swaps:
        y = _second_best(state, t, i)
        pk, pi = sl.pos(k), sl.pos(i)
        sl.copy_from(np.array([pk]), np.array([pi]), MESSAGE_TYPES)
        _fix_availabilities(state, t, k, i, y)
        assignment[assignment == i] = k
