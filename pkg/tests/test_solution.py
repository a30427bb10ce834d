import numpy as np

from evoap.solution import build_solution


def build(assignment):
    return build_solution(
        "eap", [f"p{i}" for i in range(len(assignment[0]))], np.array(assignment),
        node_name=lambda n: f"C{n - 9}" if n >= 10 else f"p{n}",
        is_consensus=lambda n: n >= 10,
    )


def test_track_spans_and_names():
    sol = build([[10, 10, 1, 1], [10, 10, 1, -1], [10, 10, 10, -1]])
    spans = {tr.id: (tr.kind, tr.birth, tr.death) for tr in sol.tracks}
    assert spans == {"C1": ("consensus", 1, None), "D:p1": ("data-exemplar", 1, 3)}
    assert sol.exemplar[1][3] is None and sol.track[1][3] is None
    assert sol.labels_at(1).tolist()[3] == -1
    assert sol.active_at(2).tolist() == [True, True, True, False]


def test_gap_opens_a_new_track():
    sol = build([[10, 11], [10, 10], [10, 11]])
    ids = [tr.id for tr in sol.tracks]
    assert ids == ["C1", "C2", "C2.2"]
    assert sol.track[2][1] == "C2.2"
    assert sol.exemplars_at(1) == ["C1"]
