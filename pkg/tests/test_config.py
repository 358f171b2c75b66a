from __future__ import annotations

import json

import pytest

from awarenav.config import (BUILTIN_SCENARIOS, ConfigError, PedestrianSpec,
                             PlannerSpec, ScenarioConfig, SensorSpec,
                             corridor_gap_scenario, corridor_pass_scenario,
                             load_scenario, save_scenario, scenario_from_dict,
                             scenario_to_dict)
from awarenav.grid import GridIndex, grid_hops

OPEN_MAP = "5 5 0.75\n" + "\n".join(["." * 5] * 5) + "\n"


def tiny_config(**kwargs):
    base = dict(name="tiny", map_text=OPEN_MAP, start=GridIndex(0, 0),
                goal=GridIndex(4, 4))
    base.update(kwargs)
    return ScenarioConfig(**base)


def test_round_trip_through_json():
    cfg = corridor_gap_scenario()
    payload = json.loads(json.dumps(scenario_to_dict(cfg)))
    again = scenario_from_dict(payload)
    assert again == cfg


def test_save_and_load_file(tmp_path):
    cfg = corridor_pass_scenario(True)
    path = tmp_path / "scn.json"
    save_scenario(cfg, path)
    assert load_scenario(path) == cfg


def test_builtin_gap_map_hops():
    cfg = corridor_gap_scenario()
    assert grid_hops(cfg.grid(), cfg.start, cfg.goal) == 14


def test_builtins_all_validate():
    for factory in BUILTIN_SCENARIOS.values():
        factory().validate()


def test_validate_rejects_blocked_start():
    cfg = tiny_config(map_text="5 5 0.75\n.....\n.....\n.....\n.....\n#....\n")
    with pytest.raises(ConfigError, match="start"):
        cfg.validate()


def test_validate_rejects_unreachable_goal():
    walled = "5 5 0.75\n..#..\n..#..\n..#..\n..#..\n..#..\n"
    cfg = tiny_config(map_text=walled)
    with pytest.raises(ConfigError, match="unreachable"):
        cfg.validate()


def test_validate_rejects_ped_on_robot_start():
    cfg = tiny_config(peds=(PedestrianSpec(0, GridIndex(0, 0), aware=True),))
    with pytest.raises(ConfigError, match=r"peds\[0\].start"):
        cfg.validate()


def test_validate_rejects_duplicate_ped_ids():
    cfg = tiny_config(peds=(PedestrianSpec(1, GridIndex(2, 2), aware=True),
                            PedestrianSpec(1, GridIndex(3, 3), aware=False)))
    with pytest.raises(ConfigError, match="duplicate"):
        cfg.validate()


def test_ped_spec_field_validation():
    with pytest.raises(ConfigError, match="behavior"):
        PedestrianSpec(0, GridIndex(1, 1), aware=True, behavior="teleport")
    with pytest.raises(ConfigError, match="stay_prob"):
        PedestrianSpec(0, GridIndex(1, 1), aware=True, stay_prob=1.5)
    with pytest.raises(ConfigError, match="waypoint"):
        PedestrianSpec(0, GridIndex(1, 1), aware=True, behavior="scripted")
    with pytest.raises(ConfigError, match="roam"):
        PedestrianSpec(0, GridIndex(1, 1), aware=True, roam=(3, 0, 1, 0))
    with pytest.raises(ConfigError, match="gaze"):
        PedestrianSpec(0, GridIndex(1, 1), aware=True, gaze_intervals=((4, 4),))


def test_sensor_and_planner_validation():
    with pytest.raises(ConfigError, match="fov_deg"):
        SensorSpec(fov_deg=0)
    with pytest.raises(ConfigError, match="miss_prob"):
        SensorSpec(miss_prob=1.2)
    with pytest.raises(ConfigError, match="k_particles"):
        PlannerSpec(k_particles=0)
    with pytest.raises(ConfigError, match="aware_prior"):
        PlannerSpec(aware_prior=-0.1)


def test_from_dict_reports_field_paths():
    good = scenario_to_dict(tiny_config())

    bad = json.loads(json.dumps(good))
    bad["peds"] = [{"id": 0, "start": [2, 2]}]
    with pytest.raises(ConfigError, match=r"peds\[0\].aware"):
        scenario_from_dict(bad)

    bad = json.loads(json.dumps(good))
    bad["sensor"] = {"range_m": 5.0, "lens_flare": 1}
    with pytest.raises(ConfigError, match="lens_flare"):
        scenario_from_dict(bad)

    bad = json.loads(json.dumps(good))
    bad["start"] = [0]
    with pytest.raises(ConfigError, match="start"):
        scenario_from_dict(bad)

    bad = json.loads(json.dumps(good))
    bad["planner"] = {"k_scenarios": "many"}
    with pytest.raises(ConfigError, match="planner.k_scenarios"):
        scenario_from_dict(bad)

    bad = json.loads(json.dumps(good))
    del bad["map"]
    with pytest.raises(ConfigError, match="map"):
        scenario_from_dict(bad)


def test_load_scenario_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_scenario(path)


def test_unknown_top_level_key_rejected():
    payload = scenario_to_dict(tiny_config())
    payload["extra_knob"] = 3
    with pytest.raises(ConfigError, match="extra_knob"):
        scenario_from_dict(payload)
