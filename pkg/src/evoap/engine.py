"""Evolutionary affinity propagation: forward-backward message passing over
time-linked per-step AP graphs, with consensus nodes as cluster tracks."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import activity as act
from .consensus import (
    ConsensusRegistry,
    consensus_self_swap,
    create_consensus_nodes,
    creation_trigger,
    extend_to_next,
    process_deaths,
    refresh_evolution,
)
from .dataseries import DatasetSeries, SimilarityTensor
from .errors import ConfigError, NoExemplarError, NoNeighborError
from .messages import temporal_message
from .solution import ClusteringSolution, build_solution
from .state import MessageState
from .static_ap import availabilities, damp, responsibilities

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EapConfig:
    gamma: float = 2.0
    omega: float = 1.0
    damping: float = 0.9
    max_iter: int = 500
    conv_window: int = 20
    min_cluster_size: int = 1
    seed: int = 0
    consensus: bool = True
    activity: bool = True
    check_bounds: bool = False

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 <= self.omega <= self.gamma:
            raise ConfigError(
                f"omega must lie in [0, gamma]; got omega={self.omega}, gamma={self.gamma}"
            )
        if not 0.0 <= self.damping < 1.0:
            raise ConfigError(f"damping must be in [0, 1), got {self.damping}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.conv_window < 1:
            raise ConfigError("conv_window must be >= 1")
        if self.min_cluster_size < 1:
            raise ConfigError("min_cluster_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Identification:
    assignment: np.ndarray  # exemplar node id per data point, -1 if inactive
    exemplars: np.ndarray  # sorted exemplar node ids
    swaps: list = field(default_factory=list)  # (consensus node, data node)


def _consensus_mask(state: MessageState, t: int, consensus_mask) -> np.ndarray:
    if consensus_mask is None:
        return state.is_consensus(state.slices[t].nodes)
    return np.asarray(consensus_mask, dtype=bool)


def _temporal_update(state: MessageState, src_t: int, dst_t: int, own: str, other: str, consensus_mask):
    src, dst = state.slices[src_t], state.slices[dst_t]
    c = _consensus_mask(state, dst_t, consensus_mask)
    common = state.common(src_t, dst_t)
    if common is None:
        v = src.rho + src.alpha - getattr(src, other)
        new = temporal_message(v, state.gamma, state.omega, c[None, :], state.branch_count)
        setattr(dst, own, damp(getattr(dst, own), new, state.damping))
        n = v.size
    else:
        pa, pb = common
        ga, gb = np.ix_(pa, pa), np.ix_(pb, pb)
        v = src.rho[ga] + src.alpha[ga] - getattr(src, other)[ga]
        new = temporal_message(v, state.gamma, state.omega, c[pb][None, :], state.branch_count)
        arr = getattr(dst, own)
        arr[gb] = damp(arr[gb], new, state.damping)
        n = v.size
    state.update_count[own] += n


def update_delta(state: MessageState, t: int, consensus_mask=None) -> None:
    """Forward message at t from rho, alpha, phi at t-1, for every pair
    present at both steps. No-op at t = 0."""
    if t <= 0:
        return
    _temporal_update(state, t - 1, t, "delta", "phi", consensus_mask)


def update_phi(state: MessageState, t: int, consensus_mask=None) -> None:
    """Backward message at t from rho, alpha, delta at t+1. No-op at the last
    step."""
    if t >= state.T - 1:
        return
    _temporal_update(state, t + 1, t, "phi", "delta", consensus_mask)


def update_rho_eap(state: MessageState, t: int) -> None:
    sl = state.slices[t]
    new = responsibilities(sl.s, sl.alpha, sl.phi + sl.delta)
    sl.rho = damp(sl.rho, new, state.damping)
    state.update_count["rho"] += sl.rho.size


def update_alpha_eap(state: MessageState, t: int) -> None:
    sl = state.slices[t]
    sl.alpha = damp(sl.alpha, availabilities(sl.rho), state.damping)
    state.update_count["alpha"] += sl.alpha.size


def identify_from_sums(
    msum: np.ndarray,
    nodes: np.ndarray,
    is_c: np.ndarray,
    n_data: int,
    heir: Optional[dict] = None,
) -> Identification:
    """Exemplar identification favouring consensus nodes.

    Exemplars are nodes with positive self message sum. A data point picks the
    best consensus exemplar toward which its message sum is positive; failing
    that it keeps itself if it is an exemplar, otherwise takes the best
    exemplar overall.

    Consensus nodes then claim data exemplars: a consensus node whose best
    exemplar is a data exemplar takes over that exemplar's members (strongest
    claim first, one claim per data exemplar). ``heir`` maps a data position
    to the position of the consensus node that was seeded from it; a data
    exemplar still claimed by nobody hands its members to a live heir. Claims
    by a consensus node that ends up without members of its own are listed in
    ``swaps`` because the node must also adopt the data exemplar's messages.
    """
    data = np.flatnonzero(~is_c)
    assignment = np.full(n_data, -1, dtype=np.int64)
    if len(nodes) == 1:
        assignment[nodes[0]] = nodes[0]
        return Identification(assignment, nodes.copy())
    E = np.flatnonzero(np.diagonal(msum) > 0)
    if E.size == 0:
        raise NoExemplarError("no exemplar identified")
    choice = E[np.argmax(msum[np.ix_(data, E)], axis=1)]
    in_E = np.isin(data, E)
    choice[in_E] = data[in_E]
    EC = E[is_c[E]]
    if EC.size:
        sub = msum[np.ix_(data, EC)]
        positive = sub > 0
        has = positive.any(axis=1)
        best = EC[np.argmax(np.where(positive, sub, -np.inf), axis=1)]
        choice[has] = best[has]

    chosen = set(choice.tolist())
    owner: dict = {}  # data exemplar position -> consensus position
    cons = np.flatnonzero(is_c)
    if cons.size:
        picks = E[np.argmax(msum[np.ix_(cons, E)], axis=1)]
        strength = msum[cons, picks]
        for r in np.argsort(-strength, kind="stable"):
            k, i = int(cons[r]), int(picks[r])
            if is_c[i] or i not in chosen or i in owner:
                continue
            owner[i] = k
    if heir:
        claimed = set(owner.values())
        for i in sorted(chosen):
            if is_c[i] or i in owner:
                continue
            k = heir.get(i)
            if k is not None and k not in claimed:
                owner[i] = k
                claimed.add(k)
    swaps = []
    for i, k in sorted(owner.items()):
        if k not in chosen:
            swaps.append((int(nodes[k]), int(nodes[i])))
        choice[choice == i] = k
    assignment[nodes[data]] = nodes[choice]
    return Identification(assignment, np.unique(nodes[choice]), swaps)


def identify_exemplars(
    state: MessageState, t: int, consensus_mask=None, heir: Optional[dict] = None
) -> Identification:
    """Identification at t; ``heir`` maps data node ids to the consensus node
    seeded from them (entries for absent nodes are ignored)."""
    sl = state.slices[t]
    if sl.m == 0:
        return Identification(np.full(state.n_data, -1, dtype=np.int64), np.array([], dtype=np.int64))
    c = _consensus_mask(state, t, consensus_mask)
    pos_heir = None
    if heir:
        pos_heir = {sl.pos(i): sl.pos(k) for i, k in heir.items() if i in sl and k in sl}
    try:
        return identify_from_sums(sl.message_sum(), sl.nodes, c, state.n_data, pos_heir)
    except NoExemplarError:
        raise NoExemplarError("no exemplar identified", time=t + 1) from None


class EapEngine:
    """Owns one message state and runs the forward-backward schedule."""

    def __init__(self, ds: DatasetSeries, sim: SimilarityTensor, cfg: EapConfig = EapConfig()):
        if sim.T != ds.T or sim.N != ds.N:
            raise ValueError("similarity tensor does not match dataset")
        if not np.array_equal(sim.active, ds.active):
            raise ValueError("similarity tensor activity does not match dataset")
        self.ds = ds
        self.sim = sim
        self.cfg = cfg
        self.state = MessageState(sim, ds.features, cfg.gamma, cfg.omega, cfg.damping)
        self.registry = ConsensusRegistry(ds.N)
        self.sets = act.ActivitySets(ds.active)
        T = ds.T
        self.assign: list = [None] * T
        self.exemplars: list = [None] * T
        # per t: data node -> consensus node whose messages were seeded from it
        self.heir: list = [dict() for _ in range(T)]
        self.lifecycle = False
        self.iteration = 0
        self.bound_checks = 0
        self.bound_violations = 0
        # message entries held for a data point at a step where it is inactive
        self.span_violations = 0
        self.history: list = []

    # -- activity ---------------------------------------------------------
    def _seed_insertions(self, t: int) -> None:
        inserted = self.sets.insertions(t)
        if inserted.size == 0:
            return
        B = self.sets.B(t)
        try:
            if self.iteration <= 1:
                nn = {int(b): act.nn_insert_first_iter(b, t, self.sim, B) for b in inserted}
            else:
                nn = {int(b): act.nn_by_messages(b, t, self.state, B, B) for b in inserted}
        except NoNeighborError:
            return  # every point is new at t: messages stay zero-initialized
        act.seed_insertion(self.state, nn, t)

    def _seed_deletions(self, t: int) -> None:
        deleted = self.sets.deletions(t)
        if deleted.size == 0:
            return
        D = self.sets.D(t)
        try:
            nn = {int(d): act.nn_by_messages(d, t, self.state, D, D) for d in deleted}
        except NoNeighborError:
            return
        act.seed_deletion(self.state, nn, t)

    # -- consensus lifecycle ---------------------------------------------
    def _represented(self, t: int) -> set:
        """Data nodes at t whose messages seeded a consensus node still live there."""
        sl = self.state.slices[t]
        return {i for i, k in self.heir[t].items() if k in sl}

    def _handover(self, t: int, assignment: np.ndarray) -> None:
        """A consensus node about to die at t whose former members (or, failing
        those, its t+1 members) now follow consensus node k2 passes its later slots to k2 from where k2's own
        span ends. Without this the track would end at t and its successor
        steps would be left without a consensus node."""
        state, reg, prev = self.state, self.registry, self.assign[t]
        T, N = state.T, self.ds.N
        if prev is None or t + 1 >= T:
            return
        chosen = set(assignment.tolist())
        for k in state.consensus_nodes(t):
            k = int(k)
            if k in chosen or k not in state.slices[t + 1]:
                continue
            now = assignment[prev == k]
            now = now[now >= N]
            if now.size == 0 and self.assign[t + 1] is not None:
                # no members at t: follow where its t+1 members sit at t
                now = assignment[self.assign[t + 1] == k]
                now = now[now >= N]
            if now.size == 0:
                continue
            vals, counts = np.unique(now, return_counts=True)
            k2 = int(vals[np.argmax(counts)])
            tt = t + 1
            while tt < T and k in state.slices[tt] and k2 in state.slices[tt]:
                tt += 1
            for tt in range(tt, T):
                sl = state.slices[tt]
                if k not in sl or k2 in sl:
                    break
                self._rename(tt, k, k2)

    def _rename(self, tt: int, old: int, new: int) -> None:
        """Move consensus node ``old``'s slot at tt to id ``new``."""
        state, reg = self.state, self.registry
        sl = state.slices[tt]
        sl.insert_copy(new, old)
        reg[new].features[tt] = reg[old].features[tt]
        reg[new].dead.pop(tt, None)
        state.refresh_similarity(tt, new, reg[new].features[tt], reg.features_of)
        for i, h in list(self.heir[tt].items()):
            if h == old:
                self.heir[tt][i] = new
        if self.assign[tt] is not None:
            self.assign[tt][self.assign[tt] == old] = new
            self.exemplars[tt] = np.unique(self.assign[tt][self.assign[tt] >= 0])

    def _majority_next(self, members: np.ndarray, nxt: np.ndarray) -> Optional[int]:
        """Consensus node holding more than half of ``members`` in the
        next-step assignment ``nxt``, if any."""
        N = self.ds.N
        follow = nxt[members]
        follow = follow[follow >= N]
        if follow.size == 0:
            return None
        vals, counts = np.unique(follow, return_counts=True)
        if 2 * counts.max() <= np.count_nonzero(members):
            return None
        return int(vals[np.argmax(counts)])

    def _untangle(self, t: int, assignment: np.ndarray) -> None:
        """Undo a rotation of ids across t -> t+1: k ends at t and its members
        move on under k2, while k2's own members move on under k3, a node
        born after t. From t+1 on, k2's slot becomes k and k3's becomes k2."""
        state, reg = self.state, self.registry
        nxt = self.assign[t + 1]
        if nxt is None:
            return
        T, N = state.T, self.ds.N
        here, there = state.slices[t], state.slices[t + 1]
        for k in np.unique(assignment[assignment >= N]):
            k = int(k)
            if k in there:
                continue
            k2 = self._majority_next(assignment == k, nxt)
            if k2 is None or k2 == k or k2 not in here or k2 not in there:
                continue
            k3 = self._majority_next(assignment == k2, nxt)
            if k3 is None or k3 in (k, k2) or k3 in here or reg[k3].birth_time <= t:
                continue
            log.debug("t=%d: untangling %d <- %d <- %d", t + 1, k, k2, k3)
            for tt in range(t + 1, T):
                sl = state.slices[tt]
                if k in sl or (k2 not in sl and k3 not in sl):
                    break
                if k2 in sl:
                    self._rename(tt, k2, k)
                    sl.remove([k2])
                if k3 in sl:
                    self._rename(tt, k3, k2)
                    sl.remove([k3])
                    reg[k3].features.pop(tt, None)

    def _stitch(self, t: int, assignment: np.ndarray) -> None:
        """Join a track ending at t to the one most of its members follow at
        t+1. The older id survives; where a younger successor overlaps it,
        the successor is folded into it."""
        state, reg, nxt = self.state, self.registry, self.assign[t + 1]
        T, N = state.T, self.ds.N
        if nxt is None:
            return
        for k in np.unique(assignment[assignment >= N]):
            k = int(k)
            if k in state.slices[t + 1]:
                continue
            members = assignment == k
            follow = nxt[members]
            follow = follow[follow >= N]
            if follow.size * 2 <= np.count_nonzero(members):
                continue
            vals, counts = np.unique(follow, return_counts=True)
            k2 = int(vals[np.argmax(counts)])
            if 2 * counts.max() <= np.count_nonzero(members):
                continue
            if k2 in state.slices[t]:
                # overlapping successor: only a younger node is absorbed
                if reg[k2].birth_time <= reg[k].birth_time:
                    continue
                tt = t
                while tt >= 0 and k2 in state.slices[tt] and k in state.slices[tt]:
                    state.slices[tt].remove([k2])
                    reg[k2].features.pop(tt, None)
                    ref = assignment if tt == t else self.assign[tt]
                    if ref is not None:
                        ref[ref == k2] = k
                        if tt != t:
                            self.exemplars[tt] = np.unique(ref[ref >= 0])
                    for i, h in list(self.heir[tt].items()):
                        if h == k2:
                            self.heir[tt][i] = k
                    tt -= 1
            for tt in range(t + 1, T):
                sl = state.slices[tt]
                if k2 not in sl or k in sl:
                    break
                self._rename(tt, k2, k)
                sl.remove([k2])
                reg[k2].features.pop(tt, None)

    def _lifecycle(self, t: int) -> None:
        state, reg = self.state, self.registry
        heir = self.heir[t]
        try:
            ident = identify_exemplars(state, t, heir=heir)
        except NoExemplarError:
            # transient empty exemplar set: leave nodes untouched this pass
            return
        assignment = ident.assignment
        if ident.swaps:
            consensus_self_swap(state, reg, t, ident.swaps, assignment)
            for k, i in ident.swaps:
                heir[i] = k
        created = create_consensus_nodes(
            state, reg, t, assignment, self.iteration,
            self.cfg.min_cluster_size, frozenset(self._represented(t)),
        )
        for rec in created:
            heir[rec.parent] = rec.node
        refresh_evolution(state, reg, t, assignment)
        exemplars = np.unique(assignment[assignment >= 0])
        self._handover(t, assignment)
        process_deaths(state, reg, exemplars, t, self.iteration)
        if t + 1 < state.T:
            self._untangle(t, assignment)
            self._stitch(t, assignment)
            exemplars = np.unique(assignment[assignment >= 0])
            pairs = extend_to_next(
                state, reg, t, assignment, self.assign[t + 1], self.exemplars[t + 1],
                self.iteration, self._represented(t + 1),
            )
            for k, src in pairs:
                self.heir[t + 1][src] = k
        self.assign[t] = assignment
        self.exemplars[t] = exemplars

    # -- sweeps -----------------------------------------------------------
    def _check_bounds(self) -> None:
        active = self.ds.active
        for t, sl in enumerate(self.state.slices):
            data = sl.nodes[sl.nodes < self.ds.N]
            self.span_violations += int(np.count_nonzero(~active[t, data])) * sl.m
        if self.cfg.check_bounds:
            self.bound_checks += 1
            self.bound_violations += self.state.temporal_bound_violations()

    def forward(self) -> None:
        state = self.state
        for t in range(state.T):
            update_delta(state, t)
            if self.cfg.activity and t > 0:
                self._seed_insertions(t)
            update_rho_eap(state, t)
            update_alpha_eap(state, t)
            if self.lifecycle:
                self._lifecycle(t)
        self._check_bounds()

    def backward(self) -> None:
        state = self.state
        for t in range(state.T - 1, -1, -1):
            update_phi(state, t)
            if self.cfg.activity and t < state.T - 1:
                self._seed_deletions(t)
            update_rho_eap(state, t)
            update_alpha_eap(state, t)
        self._check_bounds()

    def identify_all(self) -> None:
        for t in range(self.state.T):
            try:
                ident = identify_exemplars(self.state, t, heir=self.heir[t])
            except NoExemplarError:
                self.assign[t] = None
                self.exemplars[t] = None
                continue
            self.assign[t] = ident.assignment
            self.exemplars[t] = ident.exemplars

    def step(self) -> None:
        self.iteration += 1
        self.forward()
        self.backward()
        self.identify_all()
        if (
            self.cfg.consensus
            and not self.lifecycle
            and creation_trigger(self.exemplars, len(self.registry) > 0)
        ):
            self.lifecycle = True
            log.debug("consensus creation triggered after iteration %d", self.iteration)

    def run(self, callback: Optional[Callable] = None) -> ClusteringSolution:
        last = None
        stable = 0
        converged = False
        T = self.state.T
        for _ in range(self.cfg.max_iter):
            self.step()
            ex = self.exemplars[T - 1]
            if ex is not None and ex.size and last is not None and np.array_equal(ex, last):
                stable += 1
            else:
                stable = 0
            last = ex
            self.history.append(
                (self.iteration, len(self.registry), [None if e is None else len(e) for e in self.exemplars])
            )
            if callback is not None:
                callback(self)
            if stable >= self.cfg.conv_window:
                converged = True
                break
        return self.solution(converged)

    # -- output -----------------------------------------------------------
    def node_name(self, node: int) -> str:
        node = int(node)
        if node < self.ds.N:
            return str(self.ds.point_ids[node])
        return self.registry[node].label

    def solution(self, converged: bool, algorithm: Optional[str] = None) -> ClusteringSolution:
        T, N = self.ds.T, self.ds.N
        assignment = np.full((T, N), -1, dtype=np.int64)
        for t in range(T):
            if self.assign[t] is None:
                if self.ds.active[t].any():
                    raise NoExemplarError(
                        "no exemplar identified", time=t + 1, iteration=self.iteration
                    )
                continue
            assignment[t] = self.assign[t]
        used = {int(e) for e in np.unique(assignment) if e >= N}
        consensus = []
        for node in sorted(used):
            rec = self.registry[node]
            alive = [t for t in range(T) if node in self.state.slices[t]]
            consensus.append(
                {
                    "id": rec.label,
                    "birth_time": rec.birth_time + 1,
                    "birth_iteration": rec.birth_iteration,
                    "parent_exemplar": str(self.ds.point_ids[rec.parent]),
                    "alive_times": [t + 1 for t in alive],
                    "revivals": rec.revivals,
                    "features": {
                        str(t + 1): [float(x) for x in rec.features[t]]
                        for t in alive
                        if t in rec.features
                    },
                }
            )
        if algorithm is None:
            algorithm = "eap" if self.cfg.consensus else "eap-nocn"
        return build_solution(
            algorithm,
            self.ds.point_ids,
            assignment,
            self.node_name,
            lambda n: n >= N,
            iterations=self.iteration,
            converged=converged,
            consensus=consensus,
            config=self.cfg.to_dict(),
        )


def run_eap(
    ds: DatasetSeries,
    sim: SimilarityTensor,
    cfg: EapConfig = EapConfig(),
    callback: Optional[Callable] = None,
) -> ClusteringSolution:
    """Cluster a series with EAP; ``cfg.consensus=False`` gives the variant
    without consensus nodes."""
    return EapEngine(ds, sim, cfg).run(callback)


def run_ap_series(
    ds: DatasetSeries, sim: SimilarityTensor, cfg: EapConfig = EapConfig()
) -> ClusteringSolution:
    """Baseline: independent affinity propagation at every time step."""
    from .static_ap import ApConfig, run_ap

    ap_cfg = ApConfig(damping=cfg.damping, max_iter=cfg.max_iter, conv_window=cfg.conv_window)
    T, N = ds.T, ds.N
    assignment = np.full((T, N), -1, dtype=np.int64)
    iterations, converged = 0, True
    for t in range(T):
        idx = np.flatnonzero(sim.active[t])
        if idx.size == 0:
            continue
        try:
            res = run_ap(sim.at(t), ap_cfg)
        except NoExemplarError:
            raise NoExemplarError("no exemplar identified", time=t + 1) from None
        assignment[t, idx] = idx[res.exemplar]
        iterations = max(iterations, res.iterations)
        converged &= res.converged
    return build_solution(
        "ap",
        ds.point_ids,
        assignment,
        lambda n: str(ds.point_ids[n]),
        lambda n: False,
        iterations=iterations,
        converged=converged,
        config={"damping": cfg.damping, "max_iter": cfg.max_iter, "conv_window": cfg.conv_window},
    )
