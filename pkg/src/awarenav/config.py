"""Scenario configuration: a validated, JSON-round-trippable description of a
map, a navigation task, the pedestrians, the sensor, and the planner knobs.

Loading reports problems with a ``section.field`` path so a broken file tells
the user exactly which entry to fix.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .grid import GridIndex, MapFormatError, OccupancyGrid, grid_hops, parse_map_text
from .pomdp_model import ObservationParams, RewardParams, TransitionParams


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


BEHAVIORS = ("random_walk", "scripted")
ON_FINISH = ("loop", "stop", "exit")


@dataclass
class PedestrianSpec:
    ped_id: int
    start: GridIndex
    aware: bool
    behavior: str = "random_walk"
    waypoints: tuple[GridIndex, ...] = ()
    on_finish: str = "loop"
    stay_prob: float = 0.2
    speed: float = 1.0          # movement steps accrued per tick
    roam: tuple[int, int, int, int] | None = None   # inclusive (i0, j0, i1, j1)
    gaze_intervals: tuple[tuple[int, int], ...] | None = None  # [start, end) ticks

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise ConfigError(f"behavior must be one of {BEHAVIORS}, got {self.behavior!r}")
        if self.on_finish not in ON_FINISH:
            raise ConfigError(f"on_finish must be one of {ON_FINISH}, got {self.on_finish!r}")
        if not 0.0 <= self.stay_prob <= 1.0:
            raise ConfigError("stay_prob must lie in [0, 1]")
        if self.speed <= 0:
            raise ConfigError("speed must be positive")
        if self.behavior == "scripted" and not self.waypoints:
            raise ConfigError("scripted pedestrians need at least one waypoint")
        if self.roam is not None:
            i0, j0, i1, j1 = self.roam
            if i0 > i1 or j0 > j1:
                raise ConfigError("roam box must satisfy i0 <= i1 and j0 <= j1")
        if self.gaze_intervals is not None:
            for a, b in self.gaze_intervals:
                if a < 0 or b <= a:
                    raise ConfigError("gaze intervals must be [start, end) with start < end")


@dataclass
class SensorSpec:
    fov_deg: float = 270.0
    range_m: float = 5.0
    miss_prob: float = 0.05
    laser_miss_prob: float = 0.05
    vision_sigma_m: float = 0.10
    laser_sigma_m: float = 0.05
    gaze_false_negative: float = 0.1
    clutter_rate: float = 0.0   # Poisson mean of spurious detections per tick

    def __post_init__(self):
        if not 0 < self.fov_deg <= 360:
            raise ConfigError("fov_deg must lie in (0, 360]")
        if self.range_m <= 0:
            raise ConfigError("range_m must be positive")
        for name in ("miss_prob", "laser_miss_prob", "gaze_false_negative"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.vision_sigma_m < 0 or self.laser_sigma_m < 0 or self.clutter_rate < 0:
            raise ConfigError("sigmas and clutter_rate must be non-negative")


@dataclass
class PlannerSpec:
    k_particles: int = 5000
    k_scenarios: int = 500
    max_depth: int = 10
    gamma: float = 0.95
    time_budget_ms: float = 100.0
    regularization_lambda: float = 0.01
    gap_tolerance: float = 1e-6
    virtual_step_ms: float = 0.005
    aware_prior: float = 0.1
    max_trials: int | None = None

    def __post_init__(self):
        if self.k_particles < 1 or self.k_scenarios < 1:
            raise ConfigError("k_particles and k_scenarios must be at least 1")
        if not 0.0 <= self.aware_prior <= 1.0:
            raise ConfigError("aware_prior must lie in [0, 1]")


@dataclass
class ScenarioConfig:
    name: str
    map_text: str
    start: GridIndex
    goal: GridIndex
    peds: tuple[PedestrianSpec, ...] = ()
    sensor: SensorSpec = field(default_factory=SensorSpec)
    planner: PlannerSpec = field(default_factory=PlannerSpec)
    rewards: RewardParams = field(default_factory=RewardParams)
    transitions: TransitionParams = field(default_factory=TransitionParams)
    observations: ObservationParams = field(default_factory=ObservationParams)
    tick_seconds: float = 2.0
    max_ticks: int = 60
    window_size: int = 10
    stuck_wait_limit: int = 5
    gaze_latch_seconds: float = 5.0
    # must cover one tick of pedestrian motion (a diagonal cell hop is ~1.06 m
    # at 0.75 m resolution) plus sensor noise, or tracks churn every tick
    association_gate_m: float = 2.0
    miss_limit: int = 5

    def grid(self) -> OccupancyGrid:
        return parse_map_text(self.map_text)

    def validate(self) -> None:
        try:
            grid = self.grid()
        except MapFormatError as e:
            raise ConfigError(f"map: {e}") from e
        if self.tick_seconds <= 0:
            raise ConfigError("tick_seconds must be positive")
        if self.max_ticks < 1:
            raise ConfigError("max_ticks must be at least 1")
        if self.window_size < 3:
            raise ConfigError("window_size must be at least 3")
        if self.stuck_wait_limit < 1:
            raise ConfigError("stuck_wait_limit must be at least 1")
        if self.gaze_latch_seconds <= 0 or self.association_gate_m <= 0:
            raise ConfigError("gaze_latch_seconds and association_gate_m must be positive")
        if self.miss_limit < 0:
            raise ConfigError("miss_limit must be non-negative")
        for label, cell in (("start", self.start), ("goal", self.goal)):
            if not grid.in_bounds(cell):
                raise ConfigError(f"{label}: cell {cell.as_tuple()} outside the map")
            if not grid.is_free(cell):
                raise ConfigError(f"{label}: cell {cell.as_tuple()} is not free")
        if self.start == self.goal:
            raise ConfigError("goal: must differ from start")
        if grid_hops(grid, self.start, self.goal) is None:
            raise ConfigError("goal: unreachable from start on this map")
        seen_ids: set[int] = set()
        for k, ped in enumerate(self.peds):
            where = f"peds[{k}]"
            if ped.ped_id in seen_ids:
                raise ConfigError(f"{where}.ped_id: duplicate id {ped.ped_id}")
            seen_ids.add(ped.ped_id)
            if not grid.in_bounds(ped.start) or not grid.is_free(ped.start):
                raise ConfigError(f"{where}.start: cell {ped.start.as_tuple()} not a free cell")
            if ped.start == self.start:
                raise ConfigError(f"{where}.start: pedestrian sits on the robot start")
            for w, wp in enumerate(ped.waypoints):
                if not grid.in_bounds(wp) or not grid.is_free(wp):
                    raise ConfigError(f"{where}.waypoints[{w}]: cell {wp.as_tuple()} not a free cell")
            if ped.roam is not None:
                i0, j0, i1, j1 = ped.roam
                if i0 < 0 or j0 < 0 or i1 >= grid.width or j1 >= grid.height:
                    raise ConfigError(f"{where}.roam: box exceeds the map bounds")


# --- JSON (de)serialization ---------------------------------------------------


def _cell_to_list(c: GridIndex) -> list[int]:
    return [c.i, c.j]


def _cell_from(v, path: str) -> GridIndex:
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or not all(isinstance(x, int) for x in v)):
        raise ConfigError(f"{path}: expected [i, j] integer pair, got {v!r}")
    return GridIndex(v[0], v[1])


def _plain_dataclass_to_dict(obj) -> dict:
    return dataclasses.asdict(obj)


def _plain_dataclass_from(cls, payload, path: str):
    """Build a flat dataclass of scalars, rejecting unknown or mistyped keys."""
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(payload) - set(known)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown field")
    kwargs = {}
    for name, value in payload.items():
        if isinstance(value, bool) or value is None or isinstance(value, (int, float)):
            kwargs[name] = value
        else:
            raise ConfigError(f"{path}.{name}: expected a scalar, got {value!r}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from e


def _ped_from(payload, path: str) -> PedestrianSpec:
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: expected an object")
    allowed = {"id", "start", "aware", "behavior", "waypoints", "on_finish",
               "stay_prob", "speed", "roam", "gaze_intervals"}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown field")
    for req in ("id", "start", "aware"):
        if req not in payload:
            raise ConfigError(f"{path}.{req}: missing required field")
    if not isinstance(payload["id"], int):
        raise ConfigError(f"{path}.id: expected an integer")
    if not isinstance(payload["aware"], bool):
        raise ConfigError(f"{path}.aware: expected true or false")
    waypoints = tuple(_cell_from(w, f"{path}.waypoints[{k}]")
                      for k, w in enumerate(payload.get("waypoints", [])))
    roam = payload.get("roam")
    if roam is not None:
        if not isinstance(roam, (list, tuple)) or len(roam) != 4:
            raise ConfigError(f"{path}.roam: expected [i0, j0, i1, j1]")
        roam = tuple(int(x) for x in roam)
    gaze = payload.get("gaze_intervals")
    if gaze is not None:
        try:
            gaze = tuple((int(a), int(b)) for a, b in gaze)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{path}.gaze_intervals: expected [start, end] pairs") from e
    try:
        return PedestrianSpec(
            ped_id=payload["id"], start=_cell_from(payload["start"], f"{path}.start"),
            aware=payload["aware"], behavior=payload.get("behavior", "random_walk"),
            waypoints=waypoints, on_finish=payload.get("on_finish", "loop"),
            stay_prob=payload.get("stay_prob", 0.2), speed=payload.get("speed", 1.0),
            roam=roam, gaze_intervals=gaze)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from e


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    peds = []
    for p in cfg.peds:
        entry = {"id": p.ped_id, "start": _cell_to_list(p.start), "aware": p.aware,
                 "behavior": p.behavior, "on_finish": p.on_finish,
                 "stay_prob": p.stay_prob, "speed": p.speed}
        if p.waypoints:
            entry["waypoints"] = [_cell_to_list(w) for w in p.waypoints]
        if p.roam is not None:
            entry["roam"] = list(p.roam)
        if p.gaze_intervals is not None:
            entry["gaze_intervals"] = [list(g) for g in p.gaze_intervals]
        peds.append(entry)
    return {
        "name": cfg.name, "map": cfg.map_text,
        "start": _cell_to_list(cfg.start), "goal": _cell_to_list(cfg.goal),
        "peds": peds,
        "sensor": _plain_dataclass_to_dict(cfg.sensor),
        "planner": _plain_dataclass_to_dict(cfg.planner),
        "rewards": _plain_dataclass_to_dict(cfg.rewards),
        "transitions": _plain_dataclass_to_dict(cfg.transitions),
        "observations": _plain_dataclass_to_dict(cfg.observations),
        "tick_seconds": cfg.tick_seconds, "max_ticks": cfg.max_ticks,
        "window_size": cfg.window_size, "stuck_wait_limit": cfg.stuck_wait_limit,
        "gaze_latch_seconds": cfg.gaze_latch_seconds,
        "association_gate_m": cfg.association_gate_m, "miss_limit": cfg.miss_limit,
    }


_TOP_LEVEL_SCALARS = ("tick_seconds", "max_ticks", "window_size", "stuck_wait_limit",
                      "gaze_latch_seconds", "association_gate_m", "miss_limit")


def scenario_from_dict(payload: dict) -> ScenarioConfig:
    if not isinstance(payload, dict):
        raise ConfigError("top level: expected an object")
    allowed = {"name", "map", "start", "goal", "peds", "sensor", "planner",
               "rewards", "transitions", "observations", *_TOP_LEVEL_SCALARS}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
    for req in ("name", "map", "start", "goal"):
        if req not in payload:
            raise ConfigError(f"{req}: missing required field")
    if not isinstance(payload["name"], str):
        raise ConfigError("name: expected a string")
    if not isinstance(payload["map"], str):
        raise ConfigError("map: expected the map text as a string")
    peds_payload = payload.get("peds", [])
    if not isinstance(peds_payload, list):
        raise ConfigError("peds: expected a list")
    peds = tuple(_ped_from(p, f"peds[{k}]") for k, p in enumerate(peds_payload))
    kwargs = {}
    for name in _TOP_LEVEL_SCALARS:
        if name in payload:
            value = payload[name]
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{name}: expected a number")
            kwargs[name] = value
    try:
        cfg = ScenarioConfig(
            name=payload["name"], map_text=payload["map"],
            start=_cell_from(payload["start"], "start"),
            goal=_cell_from(payload["goal"], "goal"),
            peds=peds,
            sensor=_plain_dataclass_from(SensorSpec, payload.get("sensor", {}), "sensor"),
            planner=_plain_dataclass_from(PlannerSpec, payload.get("planner", {}), "planner"),
            rewards=_plain_dataclass_from(RewardParams, payload.get("rewards", {}), "rewards"),
            transitions=_plain_dataclass_from(
                TransitionParams, payload.get("transitions", {}), "transitions"),
            observations=_plain_dataclass_from(
                ObservationParams, payload.get("observations", {}), "observations"),
            **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    cfg.validate()
    return cfg


def load_scenario(path: str | Path) -> ScenarioConfig:
    raw = Path(path).read_text()
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"not valid JSON: {e}") from e
    return scenario_from_dict(payload)


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(cfg), indent=2) + "\n")


# --- built-in scenarios ---------------------------------------------------------


def _builtin_map(name: str) -> str:
    return resources.files("awarenav").joinpath(f"data/{name}").read_text()


def corridor_gap_scenario() -> ScenarioConfig:
    """Default benchmark: a walled room with a single doorway on the right; the
    goal sits in the lobby behind it. Two aware pedestrians drift in strips
    flanking the route, an unaware one crosses the lobby leg on a fixed beat,
    and a second unaware one wanders a far corner as sensor clutter."""
    peds = (
        PedestrianSpec(ped_id=0, start=GridIndex(4, 0), aware=True,
                       roam=(3, 0, 6, 0)),
        PedestrianSpec(ped_id=1, start=GridIndex(7, 4), aware=True,
                       roam=(7, 3, 7, 5)),
        PedestrianSpec(ped_id=2, start=GridIndex(2, 7), aware=False,
                       behavior="scripted",
                       waypoints=(GridIndex(6, 7), GridIndex(2, 7)),
                       on_finish="loop"),
        PedestrianSpec(ped_id=3, start=GridIndex(1, 5), aware=False,
                       roam=(0, 4, 2, 6)),
    )
    cfg = ScenarioConfig(
        name="corridor_gap", map_text=_builtin_map("corridor_gap.map"),
        start=GridIndex(0, 1), goal=GridIndex(7, 7), peds=peds,
        # the doorway route is 14 hops, so the search horizon must reach past
        # it or advancing never pays off inside the tree
        planner=PlannerSpec(k_scenarios=50, max_depth=16, max_trials=80),
        max_ticks=60)
    cfg.validate()
    return cfg


_OPEN_HALL = "10 10 0.75\n" + "\n".join(["." * 10] * 10) + "\n"


def corridor_pass_scenario(aware: bool) -> ScenarioConfig:
    """Single stationary pedestrian two cells off the straight route; used to
    contrast passing distance against awareness."""
    ped = PedestrianSpec(ped_id=0, start=GridIndex(5, 3), aware=aware,
                         stay_prob=1.0)
    cfg = ScenarioConfig(
        name=f"corridor_pass_{'aware' if aware else 'unaware'}",
        map_text=_OPEN_HALL, start=GridIndex(0, 1), goal=GridIndex(9, 1),
        peds=(ped,), planner=PlannerSpec(k_scenarios=100),
        transitions=TransitionParams(ped_stay_prob=1.0), max_ticks=40)
    cfg.validate()
    return cfg


BUILTIN_SCENARIOS = {
    "corridor_gap": corridor_gap_scenario,
    "corridor_pass_aware": lambda: corridor_pass_scenario(True),
    "corridor_pass_unaware": lambda: corridor_pass_scenario(False),
}
