import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import plans_collide
from platoon.decision import (
    InsufficientHorizon, SharedPlan, TrafficError, candidate_is_clear, collision_check, decide, fleet_plans,
    load_traffic, traffic_from_list, traffic_to_list,
)
from platoon.lookup import query


def straight(x0, y, v, T=60, dt=0.2, vid="t", psi=0.0):
    k = np.arange(T + 1)
    S = np.column_stack([x0 + v * k * dt * np.cos(psi), y + v * k * dt * np.sin(psi), np.full(T + 1, psi), np.full(T + 1, v)])
    return SharedPlan(vid, S, 4.5, 1.8, dt)


def test_identical_plans_collide():
    a = straight(0, 1.85, 10)
    assert collision_check(a, straight(0, 1.85, 10), 0.3)


def test_parallel_lanes_are_clear():
    # lateral gap 3.7 - 1.8 = 1.9 > d_min at every step
    assert not collision_check(straight(0, 1.85, 10), straight(0, 5.55, 10), 0.3)
    assert collision_check(straight(0, 1.85, 10), straight(0, 5.55, 10), 2.0)


def test_distance_equal_to_dmin_is_clear():
    assert not collision_check(straight(0, 1.85, 10), straight(0, 5.55, 10), 1.9)


def test_crossing_paths():
    # one vehicle drives north across the other's lane, arriving as the other passes x = 10 at t = 1 s
    a = straight(0, 1.85, 10, T=40, dt=0.1)
    b = straight(10, -8.15, 10, T=40, dt=0.1, psi=np.pi / 2)
    assert collision_check(a, b, 0.3)
    late = straight(10, -30.0, 10, T=40, dt=0.1, psi=np.pi / 2)
    assert not collision_check(a, late, 0.3)


def test_longer_partner_plan_is_truncated():
    assert not collision_check(straight(0, 1.85, 10, T=10), straight(40, 1.85, 10, T=60), 0.3)
    with pytest.raises(InsufficientHorizon):
        collision_check(straight(0, 1.85, 10, T=60), straight(40, 1.85, 10, T=10), 0.3)


plans = st.tuples(st.floats(-30, 30), st.floats(0, 11), st.floats(-0.5, 0.5), st.floats(0, 20))


@settings(max_examples=100)
@given(plans, plans, st.floats(0.0, 1.0))
def test_collision_check_symmetric_and_matches_brute_force(p, q, d_min):
    a = straight(p[0], p[1], p[3], T=20, psi=p[2], vid="a")
    b = straight(q[0], q[1], q[3], T=20, psi=q[2], vid="b")
    ab = collision_check(a, b, d_min)
    assert ab == collision_check(b, a, d_min)
    # brute force away from the decision boundary, where both routes agree exactly
    brute = plans_collide(a.states, (4.5, 1.8), b.states, (4.5, 1.8), d_min, 20)
    near = plans_collide(a.states, (4.5, 1.8), b.states, (4.5, 1.8), d_min + 1e-9, 20)
    if brute == near:
        assert ab == brute


def test_empty_traffic_selects_first(lane_change_table):
    _, table = lane_change_table
    res = decide("lane1", "lane2", table, [])
    assert res.feasible and res.index == 1 and res.checked == 1


def test_blocking_vehicle_alongside_makes_every_candidate_infeasible(lane_change_table):
    _, table = lane_change_table
    res = decide("lane1", "lane2", table, [straight(0, 5.55, 15)])
    assert not res.feasible and res.entry is None and res.checked == 5


@pytest.mark.parametrize("x0, v, expected", [(-40, 25, 3), (-60, 25, 4), (30, 15, 1), (60, 5, 3)])
def test_passing_traffic_selects_later_candidate(lane_change_table, x0, v, expected):
    _, table = lane_change_table
    res = decide("lane1", "lane2", table, [straight(x0, 5.55, v)])
    assert res.feasible and res.index == expected


def test_selected_candidate_is_clear_and_earlier_ones_are_not(lane_change_table):
    _, table = lane_change_table
    traffic = [straight(-40, 5.55, 25)]
    res = decide("lane1", "lane2", table, traffic)
    family = query(table, "lane1", "lane2")
    for e in family[: res.index - 1]:
        assert not candidate_is_clear(e, traffic)
    for mine in fleet_plans(res.entry.trajectory):
        assert not plans_collide(mine.states, (4.5, 1.8), traffic[0].states, (4.5, 1.8), 0.3, 60)


def test_short_shared_plan_raises(lane_change_table):
    _, table = lane_change_table
    with pytest.raises(InsufficientHorizon):
        decide("lane1", "lane2", table, [straight(-40, 5.55, 25, T=30)])


def test_sampling_mismatch_raises(lane_change_table):
    _, table = lane_change_table
    with pytest.raises(TrafficError):
        decide("lane1", "lane2", table, [straight(-40, 5.55, 25, T=120, dt=0.1)])


def test_traffic_file_round_trip(tmp_path):
    plans_in = [straight(-40, 5.55, 25, T=5, vid=7), straight(10, 9.25, 12, T=5, vid="x")]
    (tmp_path / "a.json").write_text(json.dumps({"vehicles": traffic_to_list(plans_in)}))
    (tmp_path / "b.json").write_text(json.dumps(traffic_to_list(plans_in)))
    for name in ("a.json", "b.json"):
        back = load_traffic(tmp_path / name)
        assert [p.vehicle_id for p in back] == [7, "x"]
        for p, q in zip(plans_in, back):
            assert np.allclose(p.states, q.states) and q.dt == pytest.approx(0.2)


@pytest.mark.parametrize("item", [
    {"vehicle_id": 1, "len": 4.5, "w": 1.8},
    {"vehicle_id": 1, "len": 4.5, "w": 1.8, "states": [{"t": 0.1, "x": 0, "y": 0}, {"t": 0.3, "x": 0, "y": 0}]},
    {"vehicle_id": 1, "len": 4.5, "w": 1.8,
     "states": [{"t": 0, "x": 0, "y": 0}, {"t": 0.2, "x": 0, "y": 0}, {"t": 0.5, "x": 0, "y": 0}]},
    {"vehicle_id": 1, "len": -1, "w": 1.8, "states": [{"t": 0, "x": 0, "y": 0}]},
])
def test_malformed_traffic(item):
    with pytest.raises(TrafficError):
        traffic_from_list([item])
