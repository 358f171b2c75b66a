import json
import math

import pytest

from awarenav.config import (PedestrianSpec, PlannerSpec, ScenarioConfig,
                             SensorSpec, corridor_pass_scenario)
from awarenav.grid import GridIndex
from awarenav.pomdp_model import TransitionParams
from awarenav.simulator import (EpisodeOverError, EpisodeRunner, run_episode,
                                read_episode_log, write_episode_log)

OPEN_8 = "8 8 0.75\n" + "\n".join(["." * 8] * 8) + "\n"
OPEN_10 = "10 10 0.75\n" + "\n".join(["." * 10] * 10) + "\n"

FAST_PLANNER = PlannerSpec(k_particles=400, k_scenarios=24, max_depth=6,
                           time_budget_ms=10.0)


def hall(peds=(), *, map_text=OPEN_8, start=(0, 1), goal=(7, 1), sensor=None,
         transitions=None, max_ticks=25, **kw):
    args = dict(name="t", map_text=map_text, start=GridIndex(*start),
                goal=GridIndex(*goal), peds=tuple(peds), planner=FAST_PLANNER,
                max_ticks=max_ticks, **kw)
    if sensor is not None:
        args["sensor"] = sensor
    if transitions is not None:
        args["transitions"] = transitions
    return ScenarioConfig(**args)


def test_empty_hall_drives_straight_to_goal():
    res = run_episode(hall(), seed=0)
    assert res.outcome == "goal" and res.success
    assert res.ticks == 7
    assert res.steps_to_goal == 7
    assert not res.wait_events
    assert res.replans == 0
    assert all(rec.action == "GO" for rec in res.records)
    assert all(rec.tracks == [] for rec in res.records)
    assert res.min_clearance_m is None


def test_tick_after_end_raises():
    runner = EpisodeRunner(hall(), seed=0)
    runner.run()
    assert runner.done
    with pytest.raises(EpisodeOverError):
        runner.tick()


def noisy_config():
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(5, 5), aware=True,
                           roam=(3, 3, 7, 7)),
            PedestrianSpec(ped_id=1, start=GridIndex(3, 6), aware=False,
                           roam=(2, 4, 6, 7)))
    return hall(peds, sensor=SensorSpec(clutter_rate=0.5), goal=(7, 2),
                max_ticks=15)


def test_same_seed_runs_are_byte_identical():
    a = run_episode(noisy_config(), seed=11)
    b = run_episode(noisy_config(), seed=11)
    dump_a = json.dumps([r.to_dict() for r in a.records])
    dump_b = json.dumps([r.to_dict() for r in b.records])
    assert dump_a == dump_b
    assert a.to_meta_dict() == b.to_meta_dict()
    assert "wall_ms" not in a.to_meta_dict()  # logs stay run-independent


def test_different_seeds_diverge():
    a = run_episode(noisy_config(), seed=1)
    b = run_episode(noisy_config(), seed=2)
    dump = lambda res: json.dumps([r.to_dict() for r in res.records])
    assert dump(a) != dump(b)


def scripted_ped(waypoints, on_finish):
    return PedestrianSpec(ped_id=0, start=GridIndex(3, 5), aware=False,
                          behavior="scripted",
                          waypoints=tuple(GridIndex(*w) for w in waypoints),
                          on_finish=on_finish)


def ped_cells(records, ped_id=0):
    out = []
    for rec in records:
        for p in rec.peds:
            if p["id"] == ped_id:
                out.append((tuple(p["cell"]), p["active"]))
    return out


def test_scripted_ped_exits_after_route():
    cfg = hall([scripted_ped([(6, 5)], "exit")], goal=(7, 1), max_ticks=12)
    res = run_episode(cfg, seed=0)
    cells = ped_cells(res.records)
    assert cells[0] == ((4, 5), True)  # first move happens before the record
    reached = [k for k, (c, _) in enumerate(cells) if c == (6, 5)]
    assert reached, "ped never reached its waypoint"
    assert any(not active for _, active in cells)
    # once inactive, stays inactive
    first_off = next(k for k, (_, a) in enumerate(cells) if not a)
    assert all(not a for _, a in cells[first_off:])


def test_scripted_ped_loops_route():
    cfg = hall([scripted_ped([(5, 5), (3, 5)], "loop")], goal=(7, 1),
               max_ticks=14)
    res = run_episode(cfg, seed=0)
    cells = [c for c, active in ped_cells(res.records) if active]
    assert cells.count((5, 5)) >= 2
    assert cells.count((3, 5)) >= 2


def test_scripted_ped_stops_at_route_end():
    cfg = hall([scripted_ped([(5, 5)], "stop")], goal=(7, 1), max_ticks=10)
    res = run_episode(cfg, seed=0)
    cells = ped_cells(res.records)
    assert cells[-1] == ((5, 5), True)
    reached = next(k for k, (c, _) in enumerate(cells) if c == (5, 5))
    assert all(c == (5, 5) and a for c, a in cells[reached:])


def test_aware_ped_avoids_robot_cells():
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(2, 2), aware=True,
                           stay_prob=0.0, roam=(0, 0, 7, 3)),)
    cfg = hall(peds, goal=(7, 1), max_ticks=20)
    for seed in range(4):
        runner = EpisodeRunner(cfg, seed=seed)
        while not runner.done:
            wps = runner.path.waypoints
            robot = wps[runner.robot_index]
            robot_next = wps[min(runner.robot_index + 1, len(wps) - 1)]
            rec = runner.tick()
            for p in rec.peds:
                if p["active"]:
                    assert tuple(p["cell"]) not in {(robot.i, robot.j),
                                                    (robot_next.i, robot_next.j)}


def test_gaze_intervals_drive_ground_truth():
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(4, 4), aware=False,
                           stay_prob=1.0, gaze_intervals=((2, 4),)),)
    cfg = hall(peds, goal=(7, 1), max_ticks=7)
    res = run_episode(cfg, seed=0)
    gazing = [rec.peds[0]["gazing"] for rec in res.records]
    assert gazing[:6] == [False, False, True, True, False, False]


def test_gaze_override_beats_interval_rule():
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(4, 4), aware=False,
                           stay_prob=1.0),)
    runner = EpisodeRunner(hall(peds, goal=(7, 1), max_ticks=20), seed=0)
    rec = runner.tick()
    assert rec.peds[0]["gazing"] is False
    assert runner.set_gaze_override(0, True)
    rec = runner.tick()
    assert rec.peds[0]["gazing"] is True
    assert runner.set_gaze_override(0, None)
    rec = runner.tick()
    assert rec.peds[0]["gazing"] is False
    assert not runner.set_gaze_override(99, True)


def test_narrow_fov_hides_ped_behind_robot():
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(0, 1), aware=False,
                           stay_prob=1.0, roam=(0, 1, 0, 1)),)
    cfg = hall(peds, start=(2, 1), goal=(7, 1),
               sensor=SensorSpec(fov_deg=60), max_ticks=10)
    res = run_episode(cfg, seed=0)
    assert all(rec.tracks == [] for rec in res.records)


def test_blind_sensor_never_tracks():
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(5, 4), aware=False,
                           stay_prob=1.0),)
    cfg = hall(peds, goal=(7, 1),
               sensor=SensorSpec(miss_prob=1.0, laser_miss_prob=1.0),
               max_ticks=10)
    res = run_episode(cfg, seed=0)
    assert all(rec.tracks == [] for rec in res.records)
    assert all(len(rec.belief["peds"]) == 0 for rec in res.records)


def test_blind_robot_collides_with_ped_on_path():
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(5, 1), aware=False,
                           stay_prob=1.0),)
    cfg = hall(peds, goal=(7, 1),
               sensor=SensorSpec(miss_prob=1.0, laser_miss_prob=1.0),
               max_ticks=10)
    res = run_episode(cfg, seed=0)
    assert res.outcome == "collision" and not res.success
    assert res.records[-1].reward < -400
    assert res.min_clearance_m == 0.0


def test_clutter_births_phantom_tracks():
    cfg = hall(sensor=SensorSpec(clutter_rate=3.0), goal=(7, 1), max_ticks=8)
    res = run_episode(cfg, seed=5)
    events = [e for rec in res.records for e in rec.events]
    assert any(e.startswith("track_birth:") for e in events)
    assert any(e == "belief_reinit:tracks" for e in events)


def test_late_track_birth_reinitializes_belief():
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(6, 3), aware=False,
                           stay_prob=1.0),)
    cfg = hall(peds, goal=(7, 1), sensor=SensorSpec(range_m=2.0), max_ticks=12)
    res = run_episode(cfg, seed=0)
    birth = [rec.tick for rec in res.records
             if any(e.startswith("track_birth:") for e in rec.events)]
    assert birth and birth[0] >= 2
    first = res.records[birth[0]]
    assert "belief_reinit:tracks" in first.events
    assert all(rec.tracks == [] for rec in res.records[:birth[0]])


def test_unaware_blocker_waits_then_detours():
    res = run_episode(corridor_pass_scenario(False), seed=3)
    assert res.outcome == "goal"
    assert res.replans >= 1
    assert len(res.wait_events) >= 5
    assert all(not aware for _, _, aware in res.wait_events)
    assert res.mean_wait_distance_unaware is not None
    assert res.mean_wait_distance_aware is None
    assert res.min_clearance_m > 1.875
    replan_tick = next(rec.tick for rec in res.records if "replan" in rec.events)
    after = next(rec for rec in res.records if rec.tick == replan_tick + 1)
    assert "belief_reinit:replan" in after.events
    assert after.robot_index <= 1


def test_aware_blocker_is_passed_without_waiting():
    res = run_episode(corridor_pass_scenario(True), seed=3)
    assert res.outcome == "goal"
    assert res.ticks == 9
    assert not res.wait_events
    assert res.replans == 0


def test_replan_failure_keeps_old_path():
    rows = ["#" * 10] * 8 + ["." * 10, "#" * 10]  # free row is j=1
    corridor = "10 10 0.75\n" + "\n".join(rows) + "\n"
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(6, 1), aware=False,
                           stay_prob=1.0),)
    cfg = hall(peds, map_text=corridor, start=(0, 1), goal=(9, 1),
               transitions=TransitionParams(ped_stay_prob=1.0), max_ticks=14)
    res = run_episode(cfg, seed=0)
    assert res.outcome == "timeout"
    events = [e for rec in res.records for e in rec.events]
    assert events.count("replan_failed") >= 2
    assert "replan" not in events
    assert res.replans == 0
    hops = {rec.robot_index for rec in res.records}
    assert max(hops) <= 3  # never crosses into the comfort zone


def test_set_ped_target_steers_ped():
    peds = (PedestrianSpec(ped_id=0, start=GridIndex(2, 6), aware=False,
                           stay_prob=1.0),)
    runner = EpisodeRunner(hall(peds, goal=(7, 1), max_ticks=20), seed=0)
    assert not runner.set_ped_target(0, GridIndex(99, 99))
    assert not runner.set_ped_target(7, GridIndex(5, 6))
    assert runner.set_ped_target(0, GridIndex(6, 6))
    seen = []
    for _ in range(6):
        if runner.done:
            break
        rec = runner.tick()
        seen.append(tuple(rec.peds[0]["cell"]))
    assert (6, 6) in seen
    stable = seen[seen.index((6, 6)):]
    assert all(c == (6, 6) for c in stable)  # target reached, then holds


def test_episode_log_roundtrip(tmp_path):
    cfg = noisy_config()
    res = run_episode(cfg, seed=4)
    path = tmp_path / "ep.jsonl"
    write_episode_log(path, cfg, 4, res)
    meta, steps, end = read_episode_log(path)
    assert meta["name"] == cfg.name and meta["seed"] == 4
    assert len(steps) == res.ticks == len(res.records)
    assert end["outcome"] == res.outcome
    assert steps[0]["robot_cell"] == [res.records[0].robot_cell.i,
                                      res.records[0].robot_cell.j]


def test_episode_log_rejects_garbage(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"type": "meta"}\nnot json\n')
    with pytest.raises(ValueError, match="line 2"):
        read_episode_log(path)
    path.write_text('{"type": "meta"}\n{"type": "step"}\n')
    with pytest.raises(ValueError, match="missing"):
        read_episode_log(path)
    path.write_text('{"type": "meta"}\n{"type": "wat"}\n{"type": "end"}\n')
    with pytest.raises(ValueError, match="unknown entry type"):
        read_episode_log(path)


def test_discounted_return_matches_records():
    res = run_episode(noisy_config(), seed=8)
    gamma = FAST_PLANNER.gamma
    total = sum((gamma ** rec.tick) * rec.reward for rec in res.records)
    assert math.isclose(total, res.discounted_return, rel_tol=0, abs_tol=1e-9)
