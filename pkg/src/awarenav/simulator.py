"""Closed-loop episode simulation.

Each tick runs the full pipeline: pedestrians move, the sensor produces noisy
detections, the tracker fuses them, the particle belief assimilates the tick's
observation, the tree-search planner picks an action, and the robot advances
along its path. Waiting too long or an explicit avoid decision triggers a
global replan around the tracked people.

All randomness is drawn from per-(stream, tick) generators derived from the
episode seed, so a run is a pure function of (config, seed) and identical
byte-for-byte across repeats.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .belief import (DegenerateBeliefError, ParticleBelief, init_belief,
                     rebind_window, update)
from .config import ScenarioConfig
from .despot import DespotParams, SolveResult, solve
from .geometry import sector_visible
from .grid import (ACTION_OFFSETS, GridIndex, OccupancyGrid, OutOfBoundsError,
                   local_window)
from .mdp_planner import (GlobalPath, InvalidGoalError, SmoothPath,
                          UnreachableError, extract_path, replan, smooth_path,
                          value_iteration)
from .pomdp_model import (AWARE, UNAWARE, LocalAction, LocalObservation,
                          NavigationPomdp, WindowRect)
from .tracker import (Detection, DetectionSource, Track, TrackerBank,
                      fuse_detections)

# rng stream ids; each (stream, tick) pair gets an independent generator
_STREAM_PEDS = 0
_STREAM_SENSOR = 1
_STREAM_BELIEF = 2
_STREAM_PLANNER = 3

_SMOOTH_SPACING_M = 0.25


def _tick_rng(master_seed: int, stream: int, tick: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream, tick))
    return np.random.Generator(np.random.PCG64(seq))


class EpisodeOverError(RuntimeError):
    """tick() called after the episode already ended."""


class _PedRuntime:
    __slots__ = ("spec", "cell", "residue", "wp_idx", "active", "gazing",
                 "gaze_override", "target")

    def __init__(self, spec):
        self.spec = spec
        self.cell: GridIndex = spec.start
        self.residue = 0.0
        self.wp_idx = 0
        self.active = True
        self.gazing = False
        self.gaze_override: bool | None = None
        self.target: GridIndex | None = None


@dataclass
class StepRecord:
    tick: int
    action: str
    robot_cell: GridIndex
    robot_index: int
    reward: float
    solver: dict
    peds: list[dict]
    tracks: list[dict]
    belief: dict
    events: list[str]
    wait_distance_m: float | None
    wait_near_aware: bool | None
    outcome: str | None

    def to_dict(self) -> dict:
        return {
            "tick": self.tick, "action": self.action,
            "robot_cell": [self.robot_cell.i, self.robot_cell.j],
            "robot_index": self.robot_index, "reward": self.reward,
            "solver": self.solver, "peds": self.peds, "tracks": self.tracks,
            "belief": self.belief, "events": self.events,
            "wait_distance_m": self.wait_distance_m,
            "wait_near_aware": self.wait_near_aware, "outcome": self.outcome,
        }


@dataclass
class EpisodeResult:
    outcome: str
    success: bool
    ticks: int
    steps_to_goal: int | None
    min_clearance_m: float | None
    wait_events: list[tuple[int, float, bool]]
    mean_wait_distance_aware: float | None
    mean_wait_distance_unaware: float | None
    discounted_return: float
    replans: int
    fallbacks: int
    mean_nodes_expanded: float
    wall_ms: float
    records: list[StepRecord] = field(repr=False, default_factory=list)

    def to_meta_dict(self) -> dict:
        # wall_ms stays off the dict: serialized episode artifacts must be a
        # pure function of (scenario, seed)
        return {
            "outcome": self.outcome, "success": self.success, "ticks": self.ticks,
            "steps_to_goal": self.steps_to_goal,
            "min_clearance_m": self.min_clearance_m,
            "wait_events": [[t, d, a] for t, d, a in self.wait_events],
            "mean_wait_distance_aware": self.mean_wait_distance_aware,
            "mean_wait_distance_unaware": self.mean_wait_distance_unaware,
            "discounted_return": self.discounted_return, "replans": self.replans,
            "fallbacks": self.fallbacks,
            "mean_nodes_expanded": self.mean_nodes_expanded,
        }


class EpisodeRunner:
    """Owns one episode's world state and advances it tick by tick."""

    def __init__(self, config: ScenarioConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = seed
        self.grid: OccupancyGrid = config.grid()
        _, policy = value_iteration(self.grid, config.goal)
        self.path: GlobalPath = extract_path(policy, config.start, config.goal)
        self.smooth: SmoothPath = smooth_path(self.path, _SMOOTH_SPACING_M)
        self.robot_index = 0
        self.peds = [_PedRuntime(spec) for spec in config.peds]
        self.bank = TrackerBank(gate_radius=config.association_gate_m,
                                miss_limit=config.miss_limit,
                                gaze_threshold_s=config.gaze_latch_seconds)
        self.belief: ParticleBelief | None = None
        self.model = self._build_model()
        self.last_action = LocalAction.WAIT
        self.tick_index = 0
        self.consecutive_waits = 0
        self.outcome: str | None = None
        self.records: list[StepRecord] = []
        self.last_solve: SolveResult | None = None
        self._path_dirty = False
        self._latched_seen: set[int] = set()
        self._wait_events: list[tuple[int, float, bool]] = []
        self._min_clearance = math.inf
        self._discounted_return = 0.0
        self._replans = 0
        self._fallbacks = 0

    # --- small accessors -----------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.outcome is not None

    def _robot_cell(self) -> GridIndex:
        return self.path.waypoints[self.robot_index]

    def _robot_xy(self) -> tuple[float, float]:
        return self.grid.grid_to_world(self._robot_cell())

    def _heading(self) -> tuple[float, float]:
        wps = self.path.waypoints
        if len(wps) == 1:
            return (1.0, 0.0)
        i = min(self.robot_index, len(wps) - 2)
        a, b = wps[i], wps[i + 1]
        return (float(b.i - a.i), float(b.j - a.j))

    def _build_model(self) -> NavigationPomdp:
        size = min(self.config.window_size, self.grid.width, self.grid.height)
        win = local_window(self.grid, self._robot_cell(), size)
        return NavigationPomdp(self.grid, self.path,
                               WindowRect.from_local_window(win),
                               rewards=self.config.rewards,
                               transitions=self.config.transitions,
                               observations=self.config.observations)

    def _despot_params(self) -> DespotParams:
        p = self.config.planner
        return DespotParams(k_scenarios=p.k_scenarios, max_depth=p.max_depth,
                            gamma=p.gamma, time_budget_ms=p.time_budget_ms,
                            regularization_lambda=p.regularization_lambda,
                            max_trials=p.max_trials, gap_tolerance=p.gap_tolerance,
                            virtual_step_ms=p.virtual_step_ms)

    def _track_cell(self, track: Track) -> GridIndex | None:
        x, y = track.state.position()
        try:
            return self.grid.world_to_grid(float(x), float(y))
        except OutOfBoundsError:
            return None

    def _tracks_in_window(self, model: NavigationPomdp) -> list[Track]:
        out = []
        for track in self.bank.tracks:
            cell = self._track_cell(track)
            if cell is not None and model.cell_id(cell) >= 0:
                out.append(track)
        return out

    # --- pedestrian ground truth -----------------------------------------------------

    def _true_gaze(self, ped: _PedRuntime) -> bool:
        if ped.gaze_override is not None:
            return ped.gaze_override
        if ped.spec.gaze_intervals is not None:
            return any(a <= self.tick_index < b for a, b in ped.spec.gaze_intervals)
        if not ped.spec.aware:
            return False
        rx, ry = self._robot_xy()
        px, py = self.grid.grid_to_world(ped.cell)
        return math.hypot(px - rx, py - ry) <= self.config.sensor.range_m

    def _greedy_step(self, here: GridIndex, target: GridIndex,
                     excluded: set[GridIndex]) -> GridIndex | None:
        """Strictly distance-reducing move toward `target`, fixed tie order."""
        tx, ty = self.grid.grid_to_world(target)
        hx, hy = self.grid.grid_to_world(here)
        best, best_d = None, math.hypot(hx - tx, hy - ty) - 1e-9
        for di, dj in ACTION_OFFSETS:
            c = GridIndex(here.i + di, here.j + dj)
            if not self.grid.in_bounds(c) or not self.grid.is_free(c) or c in excluded:
                continue
            x, y = self.grid.grid_to_world(c)
            d = math.hypot(x - tx, y - ty)
            if d < best_d:
                best, best_d = c, d
        return best

    def _walk_options(self, ped: _PedRuntime, excluded: set[GridIndex]) -> list[GridIndex]:
        out = []
        roam = ped.spec.roam
        for di, dj in ACTION_OFFSETS:
            c = GridIndex(ped.cell.i + di, ped.cell.j + dj)
            if not self.grid.in_bounds(c) or not self.grid.is_free(c) or c in excluded:
                continue
            if roam is not None and not (roam[0] <= c.i <= roam[2]
                                         and roam[1] <= c.j <= roam[3]):
                continue
            out.append(c)
        return out

    def _move_one(self, ped: _PedRuntime, excluded: set[GridIndex],
                  rng: np.random.Generator) -> None:
        if ped.target is not None:
            if ped.cell == ped.target:
                ped.target = None
                return
            step = self._greedy_step(ped.cell, ped.target, excluded)
            if step is not None:
                ped.cell = step
                if ped.cell == ped.target:
                    ped.target = None
            return
        if ped.spec.behavior == "scripted":
            wps = ped.spec.waypoints
            if ped.cell == wps[ped.wp_idx]:
                if ped.wp_idx + 1 < len(wps):
                    ped.wp_idx += 1
                elif ped.spec.on_finish == "loop":
                    ped.wp_idx = 0
                elif ped.spec.on_finish == "exit":
                    ped.active = False
                    return
                else:
                    return
            step = self._greedy_step(ped.cell, wps[ped.wp_idx], excluded)
            if step is not None:
                ped.cell = step
            return
        # random walk
        if rng.random() < ped.spec.stay_prob:
            return
        options = self._walk_options(ped, excluded)
        if not options:
            return
        pick = min(int(rng.random() * len(options)), len(options) - 1)
        ped.cell = options[pick]

    def _move_peds(self, rng: np.random.Generator) -> None:
        robot_cell = self._robot_cell()
        robot_next = self.path.waypoints[min(self.robot_index + 1,
                                             len(self.path.waypoints) - 1)]
        occupied = {p.cell for p in self.peds if p.active}
        for ped in self.peds:
            if not ped.active:
                continue
            occupied.discard(ped.cell)
            excluded = occupied | {robot_cell}
            if ped.spec.aware:
                excluded.add(robot_next)
            moves = int(ped.residue + ped.spec.speed)
            ped.residue = ped.residue + ped.spec.speed - moves
            for _ in range(moves):
                if not ped.active:
                    break
                self._move_one(ped, excluded, rng)
            if ped.active:
                occupied.add(ped.cell)
                ped.gazing = self._true_gaze(ped)

    # --- sensing ------------------------------------------------------------------

    def _sense(self, rng: np.random.Generator) -> tuple[list[Detection], list[bool], float]:
        sensor = self.config.sensor
        now = self.tick_index * self.config.tick_seconds
        robot_xy = self._robot_xy()
        heading = self._heading()
        vision: list[Detection] = []
        laser: list[Detection] = []
        flags: list[bool] = []
        for ped in self.peds:
            if not ped.active:
                continue
            px, py = self.grid.grid_to_world(ped.cell)
            if not sector_visible(robot_xy, heading, (px, py),
                                  sensor.fov_deg, sensor.range_m):
                continue
            if rng.random() >= sensor.miss_prob:
                noise = rng.normal(0.0, sensor.vision_sigma_m, 2)
                vision.append(Detection(DetectionSource.VISION,
                                        (px + noise[0], py + noise[1]), now))
                flags.append(ped.gazing and rng.random() >= sensor.gaze_false_negative)
            if rng.random() >= sensor.laser_miss_prob:
                noise = rng.normal(0.0, sensor.laser_sigma_m, 2)
                laser.append(Detection(DetectionSource.LASER,
                                       (px + noise[0], py + noise[1]), now))
        for _ in range(rng.poisson(sensor.clutter_rate)):
            r = sensor.range_m * math.sqrt(rng.random())
            ang = math.atan2(heading[1], heading[0]) \
                + math.radians(sensor.fov_deg) * (rng.random() - 0.5)
            vision.append(Detection(
                DetectionSource.VISION,
                (robot_xy[0] + r * math.cos(ang), robot_xy[1] + r * math.sin(ang)),
                now))
            flags.append(False)
        fused = fuse_detections(vision, laser,
                                gate_radius=self.config.association_gate_m)
        return fused, flags, now

    # --- belief -------------------------------------------------------------------

    def _observation(self, included: list[Track], det_to_track: dict[int, int],
                     flags: list[bool]) -> LocalObservation:
        flag_by_track = {tid: flags[di] for di, tid in det_to_track.items()}
        cells: list[GridIndex | None] = []
        gz: list[bool] = []
        for track in included:
            if track.id in flag_by_track:
                cells.append(self._track_cell(track))
                gz.append(bool(flag_by_track[track.id]))
            else:
                cells.append(None)
                gz.append(False)
        return LocalObservation(self._robot_cell(), tuple(cells), tuple(gz))

    def _advance_belief(self, model: NavigationPomdp, included: list[Track],
                        det_to_track: dict[int, int], flags: list[bool],
                        rng: np.random.Generator, events: list[str]) -> None:
        track_ids = tuple(t.id for t in included)
        reason = None
        if self.belief is None:
            reason = "start"
        elif self._path_dirty:
            reason = "replan"
        elif track_ids != self.belief.track_ids:
            reason = "tracks"
        elif model.advance_index(self.belief.robot_path_index,
                                 self.last_action) != self.robot_index:
            reason = "desync"
        if reason is None:
            try:
                belief = rebind_window(self.belief, model.window)
                obs = self._observation(included, det_to_track, flags)
                self.belief = update(belief, self.last_action, obs, model, rng)
                return
            except DegenerateBeliefError:
                reason = "degenerate"
        self.belief = init_belief(included, self.robot_index, model,
                                  k=self.config.planner.k_particles, rng=rng,
                                  p_aware_prior=self.config.planner.aware_prior)
        self._path_dirty = False
        events.append(f"belief_reinit:{reason}")

    # --- replanning ------------------------------------------------------------------

    def _believed_aware(self, track: Track) -> bool:
        if track.gaze.latched:
            return True
        if self.belief is not None and track.id in self.belief.track_ids:
            ped = self.belief.track_ids.index(track.id)
            return self.belief.aware_fraction(ped) >= 0.5
        return False

    def _replan(self, events: list[str]) -> bool:
        """Replan the global path treating each tracked person's comfort disk
        as blocked. Keeps the old path when no alternative exists."""
        robot_cell = self._robot_cell()
        blocked: set[GridIndex] = set()
        for track in self._tracks_in_window(self.model):
            cell = self._track_cell(track)
            radius = self.model.collision_radius(
                AWARE if self._believed_aware(track) else UNAWARE)
            cx, cy = self.grid.grid_to_world(cell)
            reach = int(radius / self.grid.resolution) + 1
            for di in range(-reach, reach + 1):
                for dj in range(-reach, reach + 1):
                    c = GridIndex(cell.i + di, cell.j + dj)
                    if not self.grid.in_bounds(c):
                        continue
                    x, y = self.grid.grid_to_world(c)
                    if math.hypot(x - cx, y - cy) <= radius:
                        blocked.add(c)
        blocked.discard(robot_cell)
        try:
            new_path = replan(self.grid.with_humans(sorted(blocked)),
                              robot_cell, self.config.goal)
        except (UnreachableError, InvalidGoalError):
            events.append("replan_failed")
            return False
        self.path = new_path
        self.smooth = smooth_path(new_path, _SMOOTH_SPACING_M)
        self.robot_index = 0
        self.model = self._build_model()
        self._path_dirty = True
        self._replans += 1
        events.append("replan")
        return True

    # --- ground-truth bookkeeping ---------------------------------------------------

    def _true_reward(self, prev_index: int, action: LocalAction) -> float:
        ids, awr = [], []
        for ped in self.peds:
            if not ped.active:
                continue
            cid = self.model.cell_id(ped.cell)
            if cid >= 0:
                ids.append(cid)
                awr.append(AWARE if ped.spec.aware else UNAWARE)
        cells = np.array([ids], dtype=np.int64) if ids else np.zeros((1, 0), np.int64)
        aware = np.array([awr], dtype=np.int8) if awr else np.zeros((1, 0), np.int8)
        return float(self.model.reward_batch(prev_index, action,
                                             self.robot_index, cells, aware)[0])

    def _closest_ped(self) -> tuple[float, bool] | None:
        rx, ry = self._robot_xy()
        best: tuple[float, bool] | None = None
        for ped in self.peds:
            if not ped.active:
                continue
            px, py = self.grid.grid_to_world(ped.cell)
            d = math.hypot(px - rx, py - ry)
            if best is None or d < best[0]:
                best = (d, ped.spec.aware)
        return best

    # --- main loop ---------------------------------------------------------------

    def tick(self) -> StepRecord:
        if self.outcome is not None:
            raise EpisodeOverError("episode already ended")
        t = self.tick_index
        events: list[str] = []

        self._move_peds(_tick_rng(self.seed, _STREAM_PEDS, t))

        detections, flags, now = self._sense(_tick_rng(self.seed, _STREAM_SENSOR, t))
        known = {tr.id for tr in self.bank.tracks}
        det_to_track = self.bank.step(detections, flags, now)
        current = {tr.id for tr in self.bank.tracks}
        events.extend(f"track_birth:{tid}" for tid in sorted(current - known))
        events.extend(f"track_drop:{tid}" for tid in sorted(known - current))
        for tr in self.bank.tracks:
            if tr.gaze.latched and tr.id not in self._latched_seen:
                self._latched_seen.add(tr.id)
                events.append(f"latched:{tr.id}")

        model = self._build_model()
        included = self._tracks_in_window(model)
        self._advance_belief(model, included, det_to_track, flags,
                             _tick_rng(self.seed, _STREAM_BELIEF, t), events)
        self.model = model

        result = solve(model, self.belief, self._despot_params(),
                       _tick_rng(self.seed, _STREAM_PLANNER, t))
        self.last_solve = result
        if result.fallback:
            self._fallbacks += 1
        action = result.action

        if action == LocalAction.WAIT:
            self.consecutive_waits += 1
        else:
            self.consecutive_waits = 0
        if (action == LocalAction.AVOID
                or self.consecutive_waits >= self.config.stuck_wait_limit):
            self._replan(events)
            self.consecutive_waits = 0

        prev_index = self.robot_index
        self.robot_index = self.model.advance_index(prev_index, action)
        self.last_action = action

        reward = self._true_reward(prev_index, action)
        self._discounted_return += (self.config.planner.gamma ** t) * reward

        near = self._closest_ped()
        if near is not None:
            self._min_clearance = min(self._min_clearance, near[0])
        wait_distance = wait_aware = None
        if action == LocalAction.WAIT and near is not None:
            wait_distance, wait_aware = near
            self._wait_events.append((t, wait_distance, wait_aware))

        robot_cell = self._robot_cell()
        collision = any(p.active and p.cell == robot_cell for p in self.peds)
        self.tick_index += 1
        if collision:
            self.outcome = "collision"
        elif self.robot_index == len(self.path.waypoints) - 1:
            self.outcome = "goal"
        elif self.tick_index >= self.config.max_ticks:
            self.outcome = "timeout"

        record = StepRecord(
            tick=t, action=action.name, robot_cell=robot_cell,
            robot_index=self.robot_index, reward=reward,
            solver={"lower": result.root_lower, "upper": result.root_upper,
                    "nodes_expanded": result.nodes_expanded,
                    "trials": result.trials,
                    "scenario_steps": result.scenario_steps,
                    "fallback": result.fallback},
            peds=[{"id": p.spec.ped_id, "cell": [p.cell.i, p.cell.j],
                   "aware": p.spec.aware, "gazing": p.gazing, "active": p.active}
                  for p in self.peds],
            tracks=self._track_dicts(),
            belief=self.belief.summary(),
            events=events, wait_distance_m=wait_distance,
            wait_near_aware=wait_aware, outcome=self.outcome)
        self.records.append(record)
        return record

    def _track_dicts(self) -> list[dict]:
        out = []
        for tr in self.bank.tracks:
            x, y = tr.state.position()
            believed = None
            if self.belief is not None and tr.id in self.belief.track_ids:
                believed = self.belief.aware_fraction(
                    self.belief.track_ids.index(tr.id))
            out.append({"id": tr.id, "x": float(x), "y": float(y),
                        "latched": tr.gaze.latched,
                        "gaze_s": tr.gaze.integral_s, "misses": tr.misses,
                        "believed_aware": believed})
        return out

    def run(self) -> EpisodeResult:
        started = time.perf_counter()
        while self.outcome is None:
            self.tick()
        return self._result((time.perf_counter() - started) * 1000.0)

    def _result(self, wall_ms: float) -> EpisodeResult:
        aware_d = [d for _, d, a in self._wait_events if a]
        unaware_d = [d for _, d, a in self._wait_events if not a]
        success = self.outcome == "goal"
        nodes = [r.solver["nodes_expanded"] for r in self.records]
        return EpisodeResult(
            outcome=self.outcome, success=success, ticks=self.tick_index,
            steps_to_goal=self.tick_index if success else None,
            min_clearance_m=(None if math.isinf(self._min_clearance)
                             else self._min_clearance),
            wait_events=list(self._wait_events),
            mean_wait_distance_aware=(sum(aware_d) / len(aware_d)
                                      if aware_d else None),
            mean_wait_distance_unaware=(sum(unaware_d) / len(unaware_d)
                                        if unaware_d else None),
            discounted_return=self._discounted_return, replans=self._replans,
            fallbacks=self._fallbacks,
            mean_nodes_expanded=(sum(nodes) / len(nodes) if nodes else 0.0),
            wall_ms=wall_ms, records=list(self.records))

    # --- interactive hooks (used by the live bridge) -----------------------------------

    def _ped(self, ped_id: int) -> _PedRuntime | None:
        for ped in self.peds:
            if ped.spec.ped_id == ped_id:
                return ped
        return None

    def set_ped_target(self, ped_id: int, cell: GridIndex) -> bool:
        ped = self._ped(ped_id)
        if (ped is None or not ped.active or not self.grid.in_bounds(cell)
                or not self.grid.is_free(cell)):
            return False
        ped.target = cell
        return True

    def set_gaze_override(self, ped_id: int, value: bool | None) -> bool:
        ped = self._ped(ped_id)
        if ped is None or not ped.active:
            return False
        ped.gaze_override = value
        return True


def run_episode(config: ScenarioConfig, seed: int,
                keep_records: bool = True) -> EpisodeResult:
    result = EpisodeRunner(config, seed).run()
    if not keep_records:
        result.records = []
    return result


# --- episode logs (one JSON object per line) -----------------------------------------


def write_episode_log(path: str | Path, config: ScenarioConfig, seed: int,
                      result: EpisodeResult) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({"type": "meta", "name": config.name, "seed": seed,
                            "tick_seconds": config.tick_seconds}) + "\n")
        for rec in result.records:
            f.write(json.dumps({"type": "step", **rec.to_dict()}) + "\n")
        f.write(json.dumps({"type": "end", **result.to_meta_dict()}) + "\n")


def read_episode_log(path: str | Path) -> tuple[dict, list[dict], dict]:
    meta, steps, end = None, [], None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"line {lineno}: not valid JSON: {e}") from e
        kind = entry.get("type")
        if kind == "meta":
            meta = entry
        elif kind == "step":
            steps.append(entry)
        elif kind == "end":
            end = entry
        else:
            raise ValueError(f"line {lineno}: unknown entry type {kind!r}")
    if meta is None or end is None:
        raise ValueError("log is missing its meta or end line")
    return meta, steps, end
