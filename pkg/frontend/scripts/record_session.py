"""Regenerate test/fixtures/session.jsonl.

Drives one deterministic 200-tick episode through the bridge's frame
builders and writes every frame the server would broadcast, one JSON object
per line: hello, then (state, metrics) per tick, then episode_end. The
scenario is a corridor sealed by a pedestrian that never moves, so the robot
waits and replans until the tick limit; that keeps the session exactly 200
ticks long and exercises waits, replans, fallbacks, gaze latching, and the
timeout banner in the console tests.

Run from frontend/:  python3 scripts/record_session.py
"""

import json
import pathlib

from awarenav.config import PedestrianSpec, PlannerSpec, ScenarioConfig
from awarenav.grid import GridIndex
from awarenav.live_bridge import LiveBridge
from awarenav.pomdp_model import TransitionParams

TICKS = 200
OUT = pathlib.Path(__file__).resolve().parent.parent / "test" / "fixtures" / "session.jsonl"


def blocked_corridor() -> ScenarioConfig:
    # the map must be tall enough that the planning window (capped by the map
    # extent) shows the blocker well before the robot reaches its comfort
    # disk; a 3-row strip would leave the planner blind until it is adjacent
    rows = ["#" * 12] * 7 + ["." * 12, "." * 12, "#" * 12]
    cfg = ScenarioConfig(
        name="blocked_corridor",
        map_text="12 10 0.75\n" + "\n".join(rows) + "\n",
        start=GridIndex(0, 1),
        goal=GridIndex(11, 1),
        peds=(
            PedestrianSpec(ped_id=0, start=GridIndex(7, 1), aware=False,
                           behavior="random_walk", stay_prob=1.0,
                           gaze_intervals=((40, 90),)),
        ),
        planner=PlannerSpec(k_particles=300, k_scenarios=16, max_depth=5,
                            time_budget_ms=10.0),
        transitions=TransitionParams(ped_stay_prob=1.0),
        max_ticks=TICKS,
    )
    cfg.validate()
    return cfg


def main() -> None:
    bridge = LiveBridge(blocked_corridor(), seed=7)
    frames = [bridge.hello_message()]
    while not bridge.runner.done:
        record = bridge.runner.tick()
        frames.append(bridge._state_message(record))
        frames.append(bridge._metrics_message(record))
    frames.append(bridge._end_message())

    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w") as fh:
        for frame in frames:
            fh.write(json.dumps(frame, separators=(",", ":")) + "\n")
    states = sum(1 for f in frames if f["type"] == "state")
    print(f"wrote {len(frames)} frames ({states} states) to {OUT}")


if __name__ == "__main__":
    main()
