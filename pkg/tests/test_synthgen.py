import numpy as np
import pytest

from evoap.dataseries import load_csv, normalize_global
from evoap.errors import DegenerateFeatureError
from evoap.synthgen import (
    SCENARIOS,
    canonical_scenario,
    dump_csv,
    gen_cluster_change,
    gen_colliding,
    gen_separated,
    gen_third_cluster,
    generate,
    normalize_synthetic,
)

from conftest import make_series


@pytest.mark.parametrize(
    "name, shape", [("separated", (40, 200, 2)), ("colliding", (25, 200, 2)),
                    ("cluster_change", (25, 200, 2)), ("third_cluster", (25, 200, 2))]
)
def test_shapes_and_determinism(name, shape):
    a, b = generate(name, 3), generate(name, 3)
    assert a.features.shape == shape
    assert a.active.all() and a.labeled.all()
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.features, generate(name, 4).features)


def test_scenario_names():
    assert canonical_scenario("Cluster-Change") == "cluster_change"
    assert set(SCENARIOS) == {"separated", "colliding", "cluster_change", "third_cluster"}
    with pytest.raises(ValueError):
        canonical_scenario("spirals")


def test_overrides():
    ds = gen_colliding(0, n_points=10, T=4)
    assert ds.features.shape == (4, 10, 2)


def test_uniform_round_robin_membership():
    ds = gen_separated(0)
    assert (ds.labels == ds.labels[0]).all()
    assert np.bincount(ds.labels[0]).tolist() == [100, 100]


def test_separated_walk_and_variance_change():
    ds = gen_separated(1)
    x = ds.features
    early = [x[t, ds.labels[t] == k].var(axis=0, ddof=1).mean() for t in range(18) for k in (0, 1)]
    late = [x[t, ds.labels[t] == k].var(axis=0, ddof=1).mean() for t in range(18, 40) for k in (0, 1)]
    assert np.mean(early) == pytest.approx(0.1, rel=0.1)
    assert np.mean(late) == pytest.approx(0.3, rel=0.1)
    # second coordinate of both means stays at 0
    y = [x[t, ds.labels[t] == k, 1].mean() for t in range(40) for k in (0, 1)]
    assert abs(np.mean(y)) < 0.05
    # first coordinate drifts at most 0.1 per step from -4 / 4
    first = x[0, ds.labels[0] == 0, 0].mean()
    assert abs(first + 4) < 3 * np.sqrt(0.1 / 100)


def test_colliding_mean_at_t9():
    ds = gen_colliding(2)
    comp0 = ds.features[8, ds.labels[8] == 0]
    assert np.all(np.abs(comp0.mean(axis=0) - 0.2) < 3 / np.sqrt(comp0.shape[0]))
    comp1 = ds.features[8, ds.labels[8] == 1]
    assert np.all(np.abs(comp1.mean(axis=0) - 3.0) < 3 / np.sqrt(comp1.shape[0]))


def test_cluster_change_switch_fraction():
    switched, total = 0, 0
    for seed in range(10):
        ds = gen_cluster_change(seed)
        assert (ds.labels[:9] == ds.labels[0]).all()
        assert (ds.labels[11:] == ds.labels[11]).all()
        origin = ds.labels[0] == 1
        switched += int(np.sum(ds.labels[11, origin] == 0))
        total += int(origin.sum())
        # switches are one-way
        assert not np.any((ds.labels[0] == 0) & (ds.labels[-1] == 1))
    p = 1 - 0.75 ** 2
    assert abs(switched / total - p) < 3 * np.sqrt(p * (1 - p) / total)


def test_third_cluster_labels_and_defectors():
    ds = gen_third_cluster(5)
    assert set(np.unique(ds.labels[8]).tolist()) == {0, 1}
    for t in range(10, 25):
        assert set(np.unique(ds.labels[t]).tolist()) == {0, 1, 2}
    defectors = ds.labels[-1] == 2
    assert not np.any(ds.labels[0][defectors] == 0)
    late = ds.features[12:, defectors].reshape(-1, 2)
    assert np.all(np.abs(late.mean(axis=0) + 3) < 3 / np.sqrt(late.shape[0]))


def test_normalize_synthetic_matches_global():
    ds = gen_third_cluster(0)
    a, b = normalize_synthetic(ds), normalize_global(ds)
    assert np.allclose(a.features, b.features, atol=1e-12)
    flat = a.features.reshape(-1, 2)
    assert np.allclose(flat.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(normalize_synthetic(a).features, a.features, atol=1e-12)


def test_normalize_synthetic_degenerate():
    with pytest.raises(DegenerateFeatureError):
        normalize_synthetic(make_series(np.ones((2, 3, 1))))


def test_dump_round_trip(tmp_path):
    ds = gen_colliding(0, n_points=6, T=3)
    dump_csv(ds, tmp_path / "c.csv")
    back = load_csv(tmp_path / "c.csv")
    assert np.allclose(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
