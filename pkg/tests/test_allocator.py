"""Layer allocation under a marginal-benefit threshold."""

import pytest

from layerfork import fixtures_data
from layerfork.allocator import (PerformanceLadder, select_layers,
                                 tradeoff_report)
from layerfork.errors import DataError


def ladder(kd, no_kd=None, f=4):
    return PerformanceLadder("demo", f, tuple(kd), no_kd)


def test_ladder_validation():
    with pytest.raises(DataError):
        PerformanceLadder("t", 4, ())
    with pytest.raises(DataError):
        PerformanceLadder("t", 4, ((1, 80.0), (3, 81.0)))      # gap in n
    with pytest.raises(DataError):
        PerformanceLadder("t", 4, ((1, 80.0), (2, 81.0)), (2, 85.0))
    lad = ladder([(1, 80.0), (2, 82.0)], (8, 90.0))
    assert lad.score(2) == 82.0 and lad.score(8) == 90.0
    with pytest.raises(DataError):
        lad.score(5)


def test_greedy_walk_stops_below_threshold():
    lad = ladder([(1, 80.0), (2, 83.0), (3, 84.0)])
    assert select_layers(lad, 2.0) == 2       # +3 then +1 < 2
    assert select_layers(lad, 1.0) == 3
    assert select_layers(lad, 3.5) == 1


def test_gain_exactly_c_justifies_the_layer():
    lad = ladder([(1, 80.0), (2, 82.0)])
    assert select_layers(lad, 2.0) == 2


def test_no_kd_jump_uses_average_gain():
    # from n=1 (80.0) to the undistilled 6-layer model (90.0): avg gain 2.0
    lad = ladder([(1, 80.0)], (6, 90.0))
    assert select_layers(lad, 2.0) == 6       # average gain == c: jump
    assert select_layers(lad, 2.1) == 1


def test_no_kd_jump_measured_from_greedy_stop():
    lad = ladder([(1, 80.0), (2, 83.0)], (6, 87.0))
    # greedy stops at n=2 (83.0); jump gain (87-83)/(6-2) = 1.0
    assert select_layers(lad, 1.0) == 6
    assert select_layers(lad, 1.5) == 2


def test_threshold_must_be_positive():
    with pytest.raises(DataError):
        select_layers(ladder([(1, 80.0)]), 0.0)


def test_selection_never_returns_zero_layers():
    lad = ladder([(1, 50.0), (2, 50.1)])
    assert select_layers(lad, 100.0) == 1


def test_bundled_ladders_reproduce_published_selections():
    expected = fixtures_data.load_json("expected.json")
    ladders = {l.task_id: l for l in fixtures_data.load_ladder_fixture()}
    assert len(ladders) == 8
    for c_str, row in expected["threshold_sweep"].items():
        for task, (f, n) in row["selections"].items():
            assert select_layers(ladders[task], float(c_str)) == n, (c_str, task)
            assert ladders[task].frozen_depth == f
    # the two spotlighted cells
    assert select_layers(ladders["rte"], 1.0) == 5
    assert select_layers(ladders["cola"], 1.0) == 8


def test_selection_monotone_in_threshold():
    for lad in fixtures_data.load_ladder_fixture():
        chosen = [select_layers(lad, c) for c in (0.5, 1.0, 2.0, 3.0, 5.0)]
        assert chosen == sorted(chosen, reverse=True), lad.task_id


def test_tradeoff_report_rows():
    ladders = fixtures_data.load_ladder_fixture()
    rows = tradeoff_report(ladders, [1.0, 3.0], base_layers=12)
    assert [r.c for r in rows] == [1.0, 3.0]
    row = rows[0]
    assert set(row.selections) == {l.task_id for l in ladders}
    descs = [(f, n) for f, n, _ in row.selections.values()]
    assert row.overhead.layers == max(f for f, _ in descs) + sum(n for _, n in descs)
    scores = [s for _, _, s in row.selections.values()]
    assert abs(row.average_score - sum(scores) / len(scores)) < 1e-12
    # a stricter threshold can only reduce the layer bill
    assert rows[1].overhead.layers <= rows[0].overhead.layers


def test_round_trip_serialization():
    lad = ladder([(1, 80.0), (2, 82.5)], (7, 88.0))
    again = PerformanceLadder.from_dict(lad.to_dict())
    assert again == lad
