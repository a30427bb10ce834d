import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evoap.messages import BRANCHES, temporal_message, temporal_message_clamped


def max_sum_pair(gamma, omega, v, consensus):
    """Difference of the two max-marginals of c^t, with the previous step's
    evidence normalized to (0, v)."""
    D = {(0, 0): -omega, (0, 1): -gamma, (1, 0): -gamma, (1, 1): 0.0 if consensus else -omega}
    one = max(D[0, 1], D[1, 1] + v)
    zero = max(D[0, 0], D[1, 0] + v)
    return one - zero


@pytest.mark.parametrize(
    "v, consensus, expect",
    [(0.0, True, 1.0), (-5.0, True, -1.0), (5.0, False, 1.0), (5.0, True, 2.0), (0.5, False, 0.5)],
)
def test_worked_examples(v, consensus, expect):
    out = temporal_message(np.array([v]), 2.0, 1.0, np.array([consensus]))
    assert out[0] == expect
    assert max_sum_pair(2.0, 1.0, v, consensus) == expect


def test_omega_zero_is_symmetric_clip():
    v = np.linspace(-6, 6, 121)
    for c in (True, False):
        out = temporal_message(v, 2.0, 0.0, np.full(v.shape, c))
        assert np.array_equal(out, np.clip(v, -2.0, 2.0))


def test_zero_penalties_silence_the_message():
    v = np.random.default_rng(0).normal(0, 10, 500)
    assert not temporal_message(v, 0.0, 0.0, v > 0).any()


def test_clamp_equivalence_on_random_inputs():
    rng = np.random.default_rng(11)
    n = 10_000
    gamma = rng.uniform(0, 6, n)
    omega = gamma * rng.random(n)
    v = rng.normal(0, 5, n)
    c = rng.random(n) < 0.5
    for k in range(n):
        a = temporal_message(v[k:k + 1], gamma[k], omega[k], c[k:k + 1])
        b = temporal_message_clamped(v[k:k + 1], gamma[k], omega[k], c[k:k + 1])
        assert a[0] == pytest.approx(b[0], abs=1e-12)


@given(
    st.floats(0, 10),
    st.floats(0, 1),
    st.floats(-30, 30),
    st.booleans(),
)
def test_matches_pairwise_max_sum(gamma, ratio, v, consensus):
    omega = gamma * ratio
    got = temporal_message(np.array([v]), gamma, omega, np.array([consensus]))[0]
    assert got == pytest.approx(max_sum_pair(gamma, omega, v, consensus), abs=1e-9)
    lo, hi = -gamma + omega, gamma - omega * (not consensus)
    assert lo - 1e-12 <= got <= hi + 1e-12


def test_branch_counts_and_unreachable_branch():
    rng = np.random.default_rng(4)
    counts = np.zeros(4, dtype=np.int64)
    v = rng.normal(0, 4, 1_000_000)
    c = rng.random(v.size) < 0.5
    temporal_message(v, 2.0, 1.0, c, counts)
    assert counts.sum() == v.size
    assert counts[BRANCHES.index("unreachable")] == 0
    assert min(counts[BRANCHES.index(b)] for b in ("saturate_low", "linear", "saturate_high")) > 0


def test_broadcasts_consensus_over_columns():
    v = np.array([[0.0, 0.0], [-5.0, 5.0]])
    out = temporal_message(v, 2.0, 1.0, np.array([[True, False]]))
    assert out.tolist() == [[1.0, 0.0], [-1.0, 1.0]]


def test_unreachable_branch_only_for_invalid_config():
    # omega > gamma makes d2 true while d1 is false; the guard lets it through
    out = temporal_message(np.array([0.0]), 1.0, 3.0, np.array([False]))
    assert out[0] == -0.0
