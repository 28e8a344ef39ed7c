import json

import numpy as np
import pytest

from platoon.formation import PlatoonConfiguration
from platoon.lookup import (
    KeyNotFound, ManeuverTable, build_table, load_table, query, save_table, table_from_dict, table_to_dict,
    worker_count,
)
from platoon.planner import PlannerConfig
from platoon.scenario import Scenario


def test_family_is_indexed_in_rho_order(lane_change_table):
    sc, table = lane_change_table
    family = query(table, sc.config("lane1").config_id, sc.config("lane2").config_id)
    assert [e.index for e in family] == [1, 2, 3, 4, 5]
    assert [e.rho for e in family] == sorted(sc.rho_grid)
    assert not table.warnings
    # the lateral reference changes later for larger rho, so the move into lane 2 starts later
    onset = [np.argmax(e.trajectory.states[0, :, 1] > 2.0) for e in family]
    assert onset == sorted(onset) and len(set(onset)) == len(onset)


def test_query_by_name(lane_change_table):
    sc, table = lane_change_table
    by_id = query(table, sc.config("lane1").config_id, sc.config("lane2").config_id)
    by_name = query(table, "lane1", "lane2")
    assert [e.rho for e in by_id] == [e.rho for e in by_name]


def test_unknown_pair_raises(lane_change_table):
    sc, table = lane_change_table
    with pytest.raises(KeyNotFound):
        query(table, "lane2", "lane1")
    with pytest.raises(KeyNotFound):
        query(table, "nope", "lane2")


def test_round_trip_is_bit_exact(lane_change_table, tmp_path):
    _, table = lane_change_table
    save_table(table, tmp_path / "t.json")
    back = load_table(tmp_path / "t.json")
    assert back.keys() == table.keys()
    for key in table.keys():
        for a, b in zip(table.entries[key], back.entries[key]):
            assert (a.index, a.rho) == (b.index, b.rho)
            assert np.array_equal(a.trajectory.states, b.trajectory.states)
            assert np.array_equal(a.trajectory.inputs, b.trajectory.inputs)
            assert a.trajectory.vehicle_ids == b.trajectory.vehicle_ids
            assert a.trajectory.params == b.trajectory.params
            assert a.trajectory.metadata == b.trajectory.metadata
    save_table(back, tmp_path / "u.json")
    assert (tmp_path / "t.json").read_bytes() == (tmp_path / "u.json").read_bytes()


def test_serialized_layout(lane_change_table):
    _, table = lane_change_table
    d = table_to_dict(table)
    veh = d["entries"][0]["maneuvers"][0]["trajectory"]["vehicles"][0]
    assert set(veh) == {"vehicle_id", "params", "t", "x", "y", "psi", "v", "a", "delta"}
    assert len(veh["a"]) == len(veh["x"]) and veh["a"][-1] is None
    assert veh["t"][:3] == pytest.approx([0.0, 0.2, 0.4])


def test_corrupted_tables_are_rejected(lane_change_table):
    _, table = lane_change_table
    d = json.loads(json.dumps(table_to_dict(table)))
    bad = dict(d, format_version=99)
    with pytest.raises(ValueError):
        table_from_dict(bad)
    cid = next(iter(d["configs"]))
    bad = json.loads(json.dumps(d))
    bad["configs"][cid]["p"][0][0] = 99.0
    with pytest.raises(ValueError):
        table_from_dict(bad)
    bad = json.loads(json.dumps(d))
    bad["entries"][0]["maneuvers"][0]["index"] = 7
    with pytest.raises(ValueError):
        table_from_dict(bad)


def small_scenario(T=10):
    a = PlatoonConfiguration(2, (1,), ((0, 1.0),), vehicle_ids=(1, 2), name="train")
    clash = PlatoonConfiguration(2, (1,), ((0, 0.05),), vehicle_ids=(1, 2), name="tight")
    sc = Scenario(planner=PlannerConfig(N=3, dt=0.2, T=T, d_min=0.3, v_max=10.0),
                  configs={"train": a, "tight": clash})
    return sc, a, clash


def test_holding_pair_collapses_rho_grid():
    sc, a, _ = small_scenario()
    table = build_table([(a, a)], [0.2, 0.5, 0.8], sc, workers=1)
    family = query(table, a.config_id, a.config_id)
    assert len(family) == 1 and family[0].rho == 0.2


def test_infeasible_pair_gives_empty_family_and_warning():
    sc, a, clash = small_scenario()
    table = build_table([(clash, a)], [0.3, 0.6], sc, workers=1)
    assert query(table, clash.config_id, a.config_id) == []
    reasons = [w["reason"] for w in table.warnings]
    assert len(reasons) == 3 and "no feasible maneuver" in reasons[-1]


def test_max_entries_caps_family():
    sc, a, _ = small_scenario()
    b = PlatoonConfiguration(2, (1,), ((0, 1.5),), vehicle_ids=(1, 2))
    table = build_table([(a, b)], [0.2, 0.4, 0.6], sc, max_entries=2, workers=2)
    assert [e.index for e in query(table, a.config_id, b.config_id)] == [1, 2]
    assert any("already holds" in w["reason"] for w in table.warnings)


def test_parallel_and_serial_builds_agree():
    sc, a, _ = small_scenario()
    b = PlatoonConfiguration(2, (1,), ((0, 1.5),), vehicle_ids=(1, 2))
    one = table_to_dict(build_table([(a, b)], [0.3, 0.6], sc, workers=1))
    two = table_to_dict(build_table([(a, b)], [0.3, 0.6], sc, workers=2))
    assert json.dumps(one) == json.dumps(two)


def test_conflicting_vehicle_orders_rejected():
    table = ManeuverTable()
    table.register(PlatoonConfiguration(2, (1,), ((0, 1.0),), vehicle_ids=(1, 2)))
    with pytest.raises(ValueError):
        table.register(PlatoonConfiguration(2, (1,), ((0, 1.0),), vehicle_ids=(2, 1)))


def test_rho_grid_validation():
    sc, a, _ = small_scenario()
    with pytest.raises(ValueError):
        build_table([(a, a)], [0.0], sc)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("PLATOON_THREADS", "3")
    assert worker_count(10) == 3 and worker_count(2) == 2
    monkeypatch.setenv("PLATOON_THREADS", "1")
    assert worker_count(10) == 1
