"""Global path planning: value iteration on the occupancy grid, path extraction,
cubic-spline smoothing, and Human-aware replanning."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import (ACTION_OFFSETS, GlobalAction, GridIndex, Occupancy,
                   OccupancyGrid)


class InvalidGoalError(ValueError):
    """Goal or start cell is occupied or outside the grid."""


class EmptyWorldError(ValueError):
    """Grid has no free cell."""


class UnreachableError(RuntimeError):
    """No policy-following path reaches the goal."""


@dataclass
class MdpParams:
    gamma: float = 0.95
    epsilon_vi: float = 1e-4
    step_reward: float = -1.0
    goal_reward: float = 100.0
    max_iterations: int | None = None  # defaults to 10 * (width + height)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.epsilon_vi <= 0:
            raise ValueError("epsilon_vi must be positive")
        if self.step_reward >= 0:
            raise ValueError("step_reward must be negative")
        if self.goal_reward <= 0:
            raise ValueError("goal_reward must be positive")


@dataclass
class ValueField:
    values: np.ndarray  # (height, width), free cells only are meaningful
    iterations_used: int
    residual: float

    def value_at(self, idx: GridIndex) -> float:
        return float(self.values[idx.j, idx.i])


@dataclass
class PolicyField:
    actions: np.ndarray  # (height, width) int8, -1 where undefined
    free: np.ndarray     # (height, width) bool
    resolution: float

    def action_at(self, idx: GridIndex) -> GlobalAction | None:
        a = int(self.actions[idx.j, idx.i])
        return None if a < 0 else GlobalAction(a)


@dataclass
class GlobalPath:
    waypoints: list[GridIndex]
    resolution: float

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def hops(self) -> int:
        return len(self.waypoints) - 1

    def world_points(self) -> np.ndarray:
        return np.array([[(w.i + 0.5) * self.resolution, (w.j + 0.5) * self.resolution]
                         for w in self.waypoints])

    def to_json(self) -> str:
        """JSON array of [i, j] pairs."""
        return json.dumps([[w.i, w.j] for w in self.waypoints])

    @staticmethod
    def from_json(text: str, resolution: float) -> "GlobalPath":
        return GlobalPath([GridIndex(int(i), int(j)) for i, j in json.loads(text)],
                          resolution)


@dataclass
class SmoothPath:
    samples: np.ndarray  # (M, 2) world coordinates
    sample_spacing: float


def _shift(arr: np.ndarray, di: int, dj: int, fill: float) -> np.ndarray:
    """out[j, i] = arr[j + dj, i + di], `fill` where the source is off-grid."""
    h, w = arr.shape
    out = np.full_like(arr, fill)
    src_j = slice(max(dj, 0), h + min(dj, 0))
    src_i = slice(max(di, 0), w + min(di, 0))
    dst_j = slice(max(-dj, 0), h + min(-dj, 0))
    dst_i = slice(max(-di, 0), w + min(-di, 0))
    out[dst_j, dst_i] = arr[src_j, src_i]
    return out


def _action_values(values: np.ndarray, free: np.ndarray, params: MdpParams) -> np.ndarray:
    """Q[a, j, i] = step_reward + gamma * V(target), self-looping on blocked moves."""
    q = np.empty((len(ACTION_OFFSETS),) + values.shape)
    for a, (di, dj) in enumerate(ACTION_OFFSETS):
        target_vals = _shift(values, di, dj, 0.0)
        target_free = _shift(free.astype(float), di, dj, 0.0) > 0.5
        q[a] = params.step_reward + params.gamma * np.where(target_free, target_vals, values)
    return q


def value_iteration(grid: OccupancyGrid, goal: GridIndex,
                    params: MdpParams | None = None) -> tuple[ValueField, PolicyField]:
    """Synchronous value iteration to a max-norm residual below epsilon_vi.

    The goal value is pinned at goal_reward (absorbing); diagonal and cardinal
    moves cost the same step_reward, so greedy extraction minimizes hop count.
    """
    params = params or MdpParams()
    free = grid.free_mask()
    if not free.any():
        raise EmptyWorldError("grid has no free cell")
    if not grid.is_free(goal):
        raise InvalidGoalError(f"goal {goal.as_tuple()} is not a free cell")
    max_iters = params.max_iterations or 10 * (grid.width + grid.height)

    values = np.zeros((grid.height, grid.width))
    values[goal.j, goal.i] = params.goal_reward
    residual = np.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        q = _action_values(values, free, params)
        new_values = q.max(axis=0)
        new_values[~free] = 0.0
        new_values[goal.j, goal.i] = params.goal_reward
        residual = float(np.abs(new_values - values)[free].max())
        values = new_values
        if residual < params.epsilon_vi:
            break

    q = _action_values(values, free, params)
    actions = q.argmax(axis=0).astype(np.int8)
    actions[~free] = -1
    return (ValueField(values, iterations, residual),
            PolicyField(actions, free, grid.resolution))


def extract_path(policy: PolicyField, start: GridIndex, goal: GridIndex,
                 max_len: int | None = None) -> GlobalPath:
    """Greedy policy-following path from start to goal.

    Raises UnreachableError if the walk revisits a cell, self-loops, or runs
    past max_len before reaching the goal.
    """
    h, w = policy.actions.shape
    for name, cell in (("start", start), ("goal", goal)):
        if not (0 <= cell.i < w and 0 <= cell.j < h) or not policy.free[cell.j, cell.i]:
            raise InvalidGoalError(f"{name} {cell.as_tuple()} is not a free cell")
    if max_len is None:
        max_len = h * w
    waypoints = [start]
    visited = {start.as_tuple()}
    cur = start
    while cur != goal:
        if len(waypoints) > max_len:
            raise UnreachableError(f"no path from {start.as_tuple()} within {max_len} steps")
        action = policy.action_at(cur)
        if action is None:
            raise UnreachableError(f"policy undefined at {cur.as_tuple()}")
        di, dj = ACTION_OFFSETS[action]
        nxt = GridIndex(cur.i + di, cur.j + dj)
        blocked = not (0 <= nxt.i < w and 0 <= nxt.j < h) or not policy.free[nxt.j, nxt.i]
        if blocked or nxt.as_tuple() in visited:
            raise UnreachableError(f"goal {goal.as_tuple()} unreachable from {start.as_tuple()}")
        waypoints.append(nxt)
        visited.add(nxt.as_tuple())
        cur = nxt
    return GlobalPath(waypoints, policy.resolution)


def chord_length_spline(path: GlobalPath):
    """Natural cubic splines x(t), y(t) over cumulative chord length.

    Returns (knot_ts, spline_x, spline_y). Needs at least two waypoints.
    """
    pts = path.world_points()
    if len(pts) < 2:
        raise ValueError("spline needs at least two waypoints")
    seg = np.hypot(*np.diff(pts, axis=0).T)
    ts = np.concatenate([[0.0], np.cumsum(seg)])
    sx = CubicSpline(ts, pts[:, 0], bc_type="natural")
    sy = CubicSpline(ts, pts[:, 1], bc_type="natural")
    return ts, sx, sy


def smooth_path(path: GlobalPath, sample_spacing: float) -> SmoothPath:
    """Resample the spline through all waypoints at roughly `sample_spacing` meters."""
    if sample_spacing <= 0:
        raise ValueError("sample_spacing must be positive")
    if len(path.waypoints) == 1:
        return SmoothPath(path.world_points(), sample_spacing)
    ts, sx, sy = chord_length_spline(path)
    total = ts[-1]
    t_samples = np.arange(0.0, total, sample_spacing)
    if t_samples.size == 0 or t_samples[-1] < total:
        t_samples = np.concatenate([t_samples, [total]])
    samples = np.column_stack([sx(t_samples), sy(t_samples)])
    return SmoothPath(samples, sample_spacing)


def replan(grid_with_dynamic: OccupancyGrid, start: GridIndex, goal: GridIndex,
           params: MdpParams | None = None) -> GlobalPath:
    """Plan treating Human cells as obstacles (fresh value iteration + extraction)."""
    blocked = grid_with_dynamic.occupancy_array != Occupancy.FREE
    masked = OccupancyGrid(grid_with_dynamic.width, grid_with_dynamic.height,
                           grid_with_dynamic.resolution,
                           blocked.astype(np.uint8) * int(Occupancy.OBSTACLE))
    _, policy = value_iteration(masked, goal, params)
    return extract_path(policy, start, goal)
