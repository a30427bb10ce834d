import numpy as np
import pytest

from evoap.dataseries import build_similarity, set_preferences
from evoap.engine import (
    EapConfig,
    EapEngine,
    identify_from_sums,
    run_ap_series,
    run_eap,
    update_delta,
    update_phi,
    update_rho_eap,
)
from evoap.errors import ConfigError, NoExemplarError
from evoap.state import MessageState
from evoap.static_ap import ApConfig, responsibilities, run_ap

from conftest import make_series


def blobs(T=4, n=10, seed=0, gap=6.0):
    rng = np.random.default_rng(seed)
    centre = np.repeat([[0.0, 0.0], [gap, 0.0]], n // 2, axis=0)
    return make_series(centre[None] + rng.normal(0, 0.5, (T, n, 2)))


def prepared(ds, pref="per-time-min"):
    return ds, set_preferences(build_similarity(ds), pref)


@pytest.mark.parametrize(
    "kwargs",
    [dict(gamma=-1), dict(gamma=1, omega=2), dict(omega=-0.5), dict(damping=1.0),
     dict(max_iter=0), dict(conv_window=0), dict(min_cluster_size=0)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        EapConfig(**kwargs)


def two_node_state(damping=0.0):
    ds, sim = prepared(make_series([[[0.0], [1.0]], [[0.0], [2.0]]]))
    return MessageState(sim, ds.features, gamma=2.0, omega=1.0, damping=damping)


def test_delta_hand_example():
    state = two_node_state()
    src = state.slices[0]
    src.rho[:] = [[0.5, -3.0], [4.0, -1.0]]
    src.alpha[:] = [[0.0, -0.5], [0.0, 0.0]]
    src.phi[:] = [[0.2, 0.0], [0.0, 2.0]]
    # column 1 plays a consensus node: upper bound gamma instead of gamma-omega
    update_delta(state, 1, consensus_mask=[False, True])
    # v = rho + alpha - phi = [[0.3, -3.5], [4.0, -3.0]]
    expect = [[0.3, -1.0], [1.0, -1.0]]
    assert np.allclose(state.slices[1].delta, expect)


def test_phi_uses_the_following_step():
    state = two_node_state()
    nxt = state.slices[1]
    nxt.rho[:] = [[1.0, -0.5], [0.0, 0.0]]
    nxt.delta[:] = [[0.5, 0.0], [0.0, 0.0]]
    update_phi(state, 0, consensus_mask=[False, False])
    assert np.allclose(state.slices[0].phi, [[0.5, -0.5], [0.0, 0.0]])


def test_temporal_messages_vanish_at_the_ends():
    state = two_node_state()
    for sl in state.slices:
        sl.rho[:] = 3.0
    update_delta(state, 0)
    update_phi(state, 1)
    assert not state.slices[0].delta.any()
    assert not state.slices[1].phi.any()


def test_rho_hand_example():
    state = two_node_state()
    sl = state.slices[0]
    sl.s[:] = [[-1.0, -3.0], [-3.0, -1.0]]
    sl.delta[:] = [[0.5, -1.0], [0.0, 0.0]]
    update_rho_eap(state, 0)
    # row 0: b = s + delta = [-0.5, -4]
    assert sl.rho[0].tolist() == pytest.approx([3.5, -3.5])
    assert sl.rho[1].tolist() == pytest.approx([-2.0, 2.0])


def test_rho_without_temporal_terms_is_static():
    rng = np.random.default_rng(0)
    s = -rng.random((5, 5))
    a = np.minimum(rng.normal(size=(5, 5)), 0)
    assert np.array_equal(responsibilities(s, a, np.zeros((5, 5))), responsibilities(s, a))


def test_rho_row_shift_in_delta():
    rng = np.random.default_rng(1)
    s = -rng.integers(1, 20, (4, 4)).astype(float)
    temporal = rng.integers(-3, 3, (4, 4)).astype(float)
    base = responsibilities(s, np.zeros((4, 4)), temporal)
    temporal[1] += 7.0
    shifted = responsibilities(s, np.zeros((4, 4)), temporal)
    assert np.argmax(shifted[1]) == np.argmax(base[1])


def test_identify_prefers_positive_consensus():
    # nodes 0..2 data, 3 consensus; data exemplar 1 has the larger sum for point 0
    msum = np.full((4, 4), -5.0)
    np.fill_diagonal(msum, [-1.0, 4.0, -1.0, 2.0])
    msum[0, 1], msum[0, 3] = 3.0, 0.5
    msum[2, 3] = 1.0
    msum[3, 1] = -2.0
    ident = identify_from_sums(msum, np.arange(4), np.array([0, 0, 0, 1], bool), 3)
    assert ident.assignment.tolist() == [3, 1, 3]
    assert ident.exemplars.tolist() == [1, 3]


def test_identify_plain_argmax_without_consensus():
    msum = np.array([[-1.0, 2.0, 1.0], [0.0, 1.0, -3.0], [0.0, -3.0, 1.0]])
    ident = identify_from_sums(msum, np.arange(3), np.zeros(3, bool), 3)
    assert ident.assignment.tolist() == [1, 1, 2]
    assert ident.swaps == []


def test_identify_single_node_and_empty():
    ident = identify_from_sums(np.array([[-9.0]]), np.array([0]), np.zeros(1, bool), 1)
    assert ident.assignment.tolist() == [0]
    with pytest.raises(NoExemplarError):
        identify_from_sums(-np.ones((2, 2)), np.arange(2), np.zeros(2, bool), 2)


def test_identify_strict_threshold():
    msum = np.array([[0.0, -1.0], [-1.0, 1.0]])
    ident = identify_from_sums(msum, np.arange(2), np.zeros(2, bool), 2)
    assert ident.exemplars.tolist() == [1]


def test_single_step_equals_static_ap():
    ds, sim = prepared(blobs(T=1, n=12, seed=3))
    ref = run_ap(sim.at(0), ApConfig())
    plain = run_eap(ds, sim, EapConfig(consensus=False))
    assert plain.exemplar[0] == [ds.point_ids[e] for e in ref.exemplar]
    # with consensus nodes the exemplars are renamed but the partition is the same
    sol = run_eap(ds, sim)
    pairs = set(zip(sol.labels_at(0).tolist(), ref.exemplar.tolist()))
    assert len(pairs) == len(set(ref.exemplar.tolist())) == len(sol.tracks)


def test_zero_coupling_keeps_temporal_messages_zero():
    ds, sim = prepared(blobs())
    engine = EapEngine(ds, sim, EapConfig(gamma=0, omega=0, consensus=False, max_iter=60))
    engine.run()
    for sl in engine.state.slices:
        assert not sl.delta.any() and not sl.phi.any()


def test_update_counts_match_schedule():
    T, n = 4, 10
    ds, sim = prepared(blobs(T=T, n=n))
    engine = EapEngine(ds, sim, EapConfig(consensus=False))
    engine.step()
    counts = engine.state.update_count
    assert counts["delta"] == counts["phi"] == n * n * (T - 1)
    assert counts["rho"] == counts["alpha"] == 2 * n * n * T


def test_bounds_hold_after_every_sweep():
    ds, sim = prepared(blobs(T=6, n=16, seed=5))
    engine = EapEngine(ds, sim, EapConfig(gamma=3.0, omega=2.0, check_bounds=True, max_iter=80))
    sol = engine.run()
    assert engine.bound_checks == 2 * sol.iterations
    assert engine.bound_violations == 0
    assert engine.state.check_finite() == 0


def test_two_blobs_give_two_stable_tracks():
    ds, sim = prepared(blobs(T=5, n=20, seed=2, gap=8.0))
    sol = run_eap(ds, sim)
    assert sol.converged
    assert len(sol.tracks) == 2
    assert all(tr.birth == 1 and tr.death is None for tr in sol.tracks)
    assert all(tr.kind == "consensus" for tr in sol.tracks)
    labels = np.array([sol.labels_at(t) for t in range(5)])
    assert (labels[:, :10] == labels[0, 0]).all() and (labels[:, 10:] == labels[0, 10]).all()


def test_variant_without_consensus():
    ds, sim = prepared(blobs())
    sol = run_eap(ds, sim, EapConfig(consensus=False))
    assert sol.algorithm == "eap-nocn"
    assert sol.consensus == []
    assert all(tr.kind == "data-exemplar" for tr in sol.tracks)


def test_runs_are_deterministic():
    ds, sim = prepared(blobs(T=5, n=14, seed=9))
    a, b = run_eap(ds, sim), run_eap(ds, sim)
    assert a.exemplar == b.exemplar and a.track == b.track and a.iterations == b.iterations


def test_no_exemplar_reports_time():
    ds, sim = prepared(blobs(T=2), pref=-1e6)
    with pytest.raises(NoExemplarError) as exc:
        run_eap(ds, sim, EapConfig(max_iter=2))
    assert "t=" in str(exc.value) or exc.value.time is not None


def test_mismatched_inputs():
    ds, sim = prepared(blobs(T=2))
    other, _ = prepared(blobs(T=3))
    with pytest.raises(ValueError):
        EapEngine(other, sim)


def test_static_baseline_series():
    ds, sim = prepared(blobs(T=3, n=12, seed=4))
    sol = run_ap_series(ds, sim)
    assert sol.algorithm == "ap"
    for t in range(3):
        ref = run_ap(sim.at(t), ApConfig())
        assert sol.exemplar[t] == [ds.point_ids[e] for e in ref.exemplar]
