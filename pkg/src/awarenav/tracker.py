"""Pedestrian tracking: vision-gated laser fusion, constant-velocity Kalman
filtering, greedy data association, and gaze accumulation with a permanent
awareness latch."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class SingularInnovationError(np.linalg.LinAlgError):
    """Innovation covariance is not invertible."""


class DetectionSource(enum.Enum):
    VISION = "vision"
    LASER = "laser"


@dataclass(frozen=True)
class Detection:
    source: DetectionSource
    pos: tuple[float, float]  # world meters
    timestamp: float
    confidence: float = 1.0


OBSERVATION_MATRIX = np.array([[1.0, 0.0, 0.0, 0.0],
                               [0.0, 1.0, 0.0, 0.0]])


def transition_matrix(dt: float) -> np.ndarray:
    """Constant-velocity state transition for state (x, y, vx, vy)."""
    a = np.eye(4)
    a[0, 2] = dt
    a[1, 3] = dt
    return a


@dataclass
class KalmanParams:
    """Constant-velocity filter parameters; control input is identically zero."""

    q: np.ndarray = field(default_factory=lambda: np.diag([0.01, 0.01, 0.1, 0.1]))
    r: np.ndarray = field(default_factory=lambda: np.diag([0.1 ** 2, 0.1 ** 2]))

    def a(self, dt: float) -> np.ndarray:
        return transition_matrix(dt)

    @property
    def b(self) -> np.ndarray:
        return np.zeros((4, 1))

    @property
    def h(self) -> np.ndarray:
        return OBSERVATION_MATRIX


@dataclass
class TrackState:
    mean: np.ndarray  # (4,) = (x, y, vx, vy)
    cov: np.ndarray   # (4, 4)

    def position(self) -> np.ndarray:
        return self.mean[:2]


def kf_predict(state: TrackState, dt: float, params: KalmanParams) -> TrackState:
    a = params.a(dt)
    mean = a @ state.mean
    cov = a @ state.cov @ a.T + params.q
    cov = 0.5 * (cov + cov.T)
    return TrackState(mean, cov)


def kf_update(state: TrackState, z, params: KalmanParams) -> TrackState:
    """Measurement update in Joseph form; raises on a singular innovation."""
    h = params.h
    z = np.asarray(z, dtype=float)
    s = h @ state.cov @ h.T + params.r
    try:
        s_inv = np.linalg.inv(s)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationError("innovation covariance is singular") from exc
    if not np.isfinite(s_inv).all():
        raise SingularInnovationError("innovation covariance is singular")
    gain = state.cov @ h.T @ s_inv
    mean = state.mean + gain @ (z - h @ state.mean)
    ikh = np.eye(4) - gain @ h
    cov = ikh @ state.cov @ ikh.T + gain @ params.r @ gain.T
    cov = 0.5 * (cov + cov.T)
    return TrackState(mean, cov)


@dataclass(frozen=True)
class GazeAccumulator:
    """Integrated eye-contact time; the latch is permanent once set."""

    integral_s: float = 0.0
    threshold_s: float = 5.0
    latched: bool = False


def gaze_step(acc: GazeAccumulator, gaze_in_center: bool, dt: float) -> GazeAccumulator:
    """Accumulate dt while gazing; latch strictly above the threshold."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    integral = acc.integral_s + (dt if gaze_in_center else 0.0)
    latched = acc.latched or integral > acc.threshold_s
    return GazeAccumulator(integral, acc.threshold_s, latched)


@dataclass(frozen=True)
class CenterRegion:
    """Central image patch used by the simulated gaze classifier."""

    width_px: int = 200
    height_px: int = 150

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("center region dimensions must be positive")


@dataclass
class Track:
    id: int
    state: TrackState
    gaze: GazeAccumulator
    last_update: float
    misses: int = 0

    @property
    def awareness(self) -> int:
        """+1 once the gaze latch is set, else -1."""
        return 1 if self.gaze.latched else -1


def _greedy_pairs(src_xy: np.ndarray, dst_xy: np.ndarray, gate: float) -> dict[int, int]:
    """One-to-one greedy nearest matching src->dst within `gate` meters.

    Candidate pairs are taken in (distance, src index, dst index) order, which
    makes the assignment deterministic under ties.
    """
    if len(src_xy) == 0 or len(dst_xy) == 0:
        return {}
    d = np.hypot(src_xy[:, None, 0] - dst_xy[None, :, 0],
                 src_xy[:, None, 1] - dst_xy[None, :, 1])
    order = sorted(((float(d[s, t]), s, t)
                    for s in range(len(src_xy)) for t in range(len(dst_xy))
                    if d[s, t] <= gate))
    matches: dict[int, int] = {}
    used_dst: set[int] = set()
    for _, s, t in order:
        if s in matches or t in used_dst:
            continue
        matches[s] = t
        used_dst.add(t)
    return matches


def fuse_detections(vision: list[Detection], laser: list[Detection],
                    gate_radius: float = 1.0) -> list[Detection]:
    """Vision-count-gated fusion: at most one laser hit refines each vision hit.

    Output is aligned with the vision list (|out| <= |vision|); a matched
    detection takes the laser position, an unmatched one passes through.
    """
    if not vision:
        return []
    v_xy = np.array([d.pos for d in vision])
    l_xy = np.array([d.pos for d in laser]) if laser else np.zeros((0, 2))
    matches = _greedy_pairs(v_xy, l_xy, gate_radius)
    fused = []
    for vi, det in enumerate(vision):
        li = matches.get(vi)
        if li is None:
            fused.append(det)
        else:
            fused.append(Detection(DetectionSource.LASER, laser[li].pos,
                                   det.timestamp, det.confidence))
    return fused


def associate(tracks: list[Track], detections: list[Detection],
              gate_radius: float = 1.0):
    """Greedy nearest-neighbor assignment of detections to track positions.

    Returns (matches: track index -> detection index, births: unmatched
    detection indices, missed: unmatched track indices).
    """
    t_xy = np.array([t.state.position() for t in tracks]) if tracks else np.zeros((0, 2))
    d_xy = np.array([d.pos for d in detections]) if detections else np.zeros((0, 2))
    matches = _greedy_pairs(t_xy, d_xy, gate_radius)
    births = [di for di in range(len(detections)) if di not in matches.values()]
    missed = [ti for ti in range(len(tracks)) if ti not in matches]
    return matches, births, missed


class TrackerBank:
    """Owns the live track set: predict/update cycles, births, and deletion."""

    def __init__(self, params: KalmanParams | None = None, gate_radius: float = 1.0,
                 miss_limit: int = 5, birth_velocity_var: float = 10.0,
                 gaze_threshold_s: float = 5.0):
        self.params = params or KalmanParams()
        self.gate_radius = gate_radius
        self.miss_limit = miss_limit
        self.birth_velocity_var = birth_velocity_var
        self.gaze_threshold_s = gaze_threshold_s
        self.tracks: list[Track] = []
        self._next_id = 0
        self._last_time: float | None = None

    def step(self, detections: list[Detection], gaze_flags: list[bool],
             now: float) -> dict[int, int]:
        """Advance one tick; returns detection index -> track id for this tick."""
        dt = 1.0 if self._last_time is None else now - self._last_time
        self._last_time = now
        for t in self.tracks:
            t.state = kf_predict(t.state, dt, self.params)
        matches, births, missed = associate(self.tracks, detections, self.gate_radius)
        det_to_track: dict[int, int] = {}
        for ti, di in sorted(matches.items()):
            t = self.tracks[ti]
            t.state = kf_update(t.state, detections[di].pos, self.params)
            t.gaze = gaze_step(t.gaze, gaze_flags[di], dt)
            t.last_update = now
            t.misses = 0
            det_to_track[di] = t.id
        for ti in missed:
            t = self.tracks[ti]
            t.misses += 1
            t.gaze = gaze_step(t.gaze, False, dt)
        for di in births:
            x, y = detections[di].pos
            mean = np.array([x, y, 0.0, 0.0])
            cov = np.diag([self.params.r[0, 0], self.params.r[1, 1],
                           self.birth_velocity_var, self.birth_velocity_var])
            track = Track(self._next_id, TrackState(mean, cov),
                          GazeAccumulator(threshold_s=self.gaze_threshold_s),
                          last_update=now)
            self._next_id += 1
            track.gaze = gaze_step(track.gaze, gaze_flags[di], dt)
            self.tracks.append(track)
            det_to_track[di] = track.id
        self.tracks = [t for t in self.tracks if t.misses <= self.miss_limit]
        self.tracks.sort(key=lambda t: t.id)
        return det_to_track

    def active(self) -> list[Track]:
        return list(self.tracks)


# --- detection log replay -----------------------------------------------------

def load_detection_log(path: str | Path) -> dict[int, list[Detection]]:
    """Read a JSON-lines detection log: {tick, source, x, y, confidence}."""
    out: dict[int, list[Detection]] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            det = Detection(DetectionSource(rec["source"]),
                            (float(rec["x"]), float(rec["y"])),
                            float(rec["tick"]),
                            float(rec.get("confidence", 1.0)))
            tick = int(rec["tick"])
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"bad detection record on line {line_no}: {exc}") from exc
        out.setdefault(tick, []).append(det)
    return out


def dump_detection_log(records: dict[int, list[Detection]], path: str | Path) -> None:
    lines = []
    for tick in sorted(records):
        for det in records[tick]:
            lines.append(json.dumps({"tick": tick, "source": det.source.value,
                                     "x": det.pos[0], "y": det.pos[1],
                                     "confidence": det.confidence}))
    Path(path).write_text("\n".join(lines) + "\n")
