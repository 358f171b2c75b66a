"""Local-planner POMDP: robot progress along a fixed path among pedestrians of
hidden awareness. Provides the generative model (transition, observation,
reward, termination) plus vectorized batch kernels shared by the belief filter
and the tree-search solver."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .geometry import sector_visible_many
from .grid import (ACTION_OFFSETS, GridIndex, LocalWindow, OccupancyGrid)
from .mdp_planner import GlobalPath

AWARE = 1
UNAWARE = -1


class InvalidAwarenessError(ValueError):
    """Awareness value outside {-1, +1}."""


class LocalAction(enum.IntEnum):
    GO = 0
    WAIT = 1
    AVOID = 2


@dataclass(frozen=True)
class PedState:
    cell: GridIndex
    awareness: int  # +1 aware, -1 unaware

    def __post_init__(self):
        if self.awareness not in (AWARE, UNAWARE):
            raise InvalidAwarenessError(f"awareness must be +1 or -1, got {self.awareness}")


@dataclass(frozen=True)
class PomdpState:
    robot_path_index: int
    peds: tuple[PedState, ...]
    step: int = 0


@dataclass(frozen=True)
class LocalObservation:
    robot_cell: GridIndex
    ped_cells: tuple[GridIndex | None, ...]
    gaze_flags: tuple[bool, ...]


@dataclass
class RewardParams:
    goal_weight: float = 1.0
    collision_weight: float = 1.0
    time_weight: float = 1.0
    goal_reward: float = 1000.0
    collision_penalty: float = -500.0
    time_penalty: float = -1.0
    aware_radius_m: float = 1.125
    unaware_radius_m: float = 1.875
    avoid_cost: float = -5.0
    collision_ramp: bool = False  # linear ramp inside the radius instead of a step

    def __post_init__(self):
        if self.aware_radius_m >= self.unaware_radius_m:
            raise ValueError("aware radius must be smaller than the unaware radius")
        if self.aware_radius_m <= 0:
            raise ValueError("radii must be positive")


@dataclass
class TransitionParams:
    ped_stay_prob: float = 0.2
    aware_avoidance: bool = True

    def __post_init__(self):
        if not 0.0 <= self.ped_stay_prob <= 1.0:
            raise ValueError("ped_stay_prob must lie in [0, 1]")

    @property
    def ped_move_prob(self) -> float:
        return 1.0 - self.ped_stay_prob


@dataclass
class ObservationParams:
    miss_prob: float = 0.05
    adjacent_noise_prob: float = 0.1
    gaze_false_negative: float = 0.1
    range_m: float = 5.0
    fov_deg: float = 270.0

    def __post_init__(self):
        if self.miss_prob + self.adjacent_noise_prob > 1.0:
            raise ValueError("miss_prob + adjacent_noise_prob must not exceed 1")


def collision_radius(awareness: int, params: RewardParams) -> float:
    """Awareness-modulated comfort radius: aware pedestrians tolerate closer passes."""
    if awareness == AWARE:
        return params.aware_radius_m
    if awareness == UNAWARE:
        return params.unaware_radius_m
    raise InvalidAwarenessError(f"awareness must be +1 or -1, got {awareness}")


@dataclass(frozen=True)
class WindowRect:
    """Axis-aligned cell rectangle the model's pedestrians live in."""

    origin_i: int
    origin_j: int
    width: int
    height: int

    @staticmethod
    def from_grid(grid: OccupancyGrid) -> "WindowRect":
        return WindowRect(0, 0, grid.width, grid.height)

    @staticmethod
    def from_local_window(w: LocalWindow) -> "WindowRect":
        return WindowRect(w.origin.i, w.origin.j, w.size, w.size)

    def contains(self, idx: GridIndex) -> bool:
        return (self.origin_i <= idx.i < self.origin_i + self.width
                and self.origin_j <= idx.j < self.origin_j + self.height)

    def clamp(self, idx: GridIndex) -> GridIndex:
        return GridIndex(min(max(idx.i, self.origin_i), self.origin_i + self.width - 1),
                         min(max(idx.j, self.origin_j), self.origin_j + self.height - 1))


# random-draw slots per pedestrian per step, in consumption order
DRAWS_PER_PED = 5  # stay, direction, obs branch, adjacent pick, gaze flip


class NavigationPomdp:
    """Generative model bound to one global path and one local window."""

    def __init__(self, grid: OccupancyGrid, path: GlobalPath, window: WindowRect,
                 rewards: RewardParams | None = None,
                 transitions: TransitionParams | None = None,
                 observations: ObservationParams | None = None,
                 step_cap: int = 10_000):
        self.grid = grid
        self.path = path
        self.window = window
        self.rewards = rewards or RewardParams()
        self.transitions = transitions or TransitionParams()
        self.observations = observations or ObservationParams()
        self.step_cap = step_cap
        self.actions = (LocalAction.GO, LocalAction.WAIT, LocalAction.AVOID)
        self.last_index = len(path.waypoints) - 1
        self._build_tables()

    # --- cell indexing ---------------------------------------------------------

    def cell_id(self, idx: GridIndex) -> int:
        """Window-local id, or -1 for cells outside the window."""
        if not self.window.contains(idx):
            return -1
        return (idx.j - self.window.origin_j) * self.window.width + (idx.i - self.window.origin_i)

    def id_to_cell(self, cid: int) -> GridIndex:
        return GridIndex(self.window.origin_i + cid % self.window.width,
                         self.window.origin_j + cid // self.window.width)

    def _build_tables(self) -> None:
        w, h = self.window.width, self.window.height
        n = w * h
        res = self.grid.resolution
        ii = self.window.origin_i + np.arange(n) % w
        jj = self.window.origin_j + np.arange(n) // w
        self.cx = (ii + 0.5) * res
        self.cy = (jj + 0.5) * res
        occ = self.grid.occupancy_array
        self.free = occ[jj, ii] == 0

        # free_nbrs: in-window free targets; all_nbrs: any in-window neighbor
        self.free_nbrs = np.full((n, 8), -1, dtype=np.int64)
        self.all_nbrs = np.full((n, 8), -1, dtype=np.int64)
        for a, (di, dj) in enumerate(ACTION_OFFSETS):
            ti, tj = ii + di, jj + dj
            inside = ((self.window.origin_i <= ti) & (ti < self.window.origin_i + w)
                      & (self.window.origin_j <= tj) & (tj < self.window.origin_j + h))
            tid = np.where(inside, (tj - self.window.origin_j) * w
                           + (ti - self.window.origin_i), -1)
            self.all_nbrs[:, a] = tid
            target_free = np.zeros(n, dtype=bool)
            target_free[inside] = occ[tj[inside], ti[inside]] == 0
            self.free_nbrs[:, a] = np.where(inside & target_free, tid, -1)
        self.n_free_nbrs = (self.free_nbrs >= 0).sum(axis=1)

        # robot geometry per path index: world position, heading, window cell id
        pts = self.path.world_points()
        self.robot_xy = pts
        if len(pts) > 1:
            headings = np.diff(pts, axis=0)
            self.headings = np.vstack([headings, headings[-1]])
        else:
            self.headings = np.array([[1.0, 0.0]])
        self.robot_cell_ids = np.array([self.cell_id(wp) for wp in self.path.waypoints])
        self._vis_cache: dict[int, np.ndarray] = {}

    def visibility(self, path_index: int) -> np.ndarray:
        """Boolean mask over window cells inside the forward sensing sector."""
        cached = self._vis_cache.get(path_index)
        if cached is None:
            cached = sector_visible_many(
                self.robot_xy[path_index], self.headings[path_index],
                self.cx, self.cy, self.observations.fov_deg, self.observations.range_m)
            self._vis_cache[path_index] = cached
        return cached

    def advance_index(self, path_index: int, action: LocalAction) -> int:
        if action == LocalAction.GO:
            return min(path_index + 1, self.last_index)
        return path_index

    # --- state conversion -------------------------------------------------------

    def state_arrays(self, s: PomdpState) -> tuple[np.ndarray, np.ndarray]:
        cells = np.array([[self.cell_id(self.window.clamp(p.cell)) for p in s.peds]],
                         dtype=np.int64)
        aware = np.array([[p.awareness for p in s.peds]], dtype=np.int8)
        return cells, aware

    def make_state(self, robot_index: int, cells_row: np.ndarray,
                   aware_row: np.ndarray, step: int) -> PomdpState:
        peds = tuple(PedState(self.id_to_cell(int(c)), int(g))
                     for c, g in zip(cells_row, aware_row))
        return PomdpState(robot_index, peds, step)

    # --- batch kernels ------------------------------------------------------------

    def step_peds(self, cells: np.ndarray, aware: np.ndarray,
                  u_stay: np.ndarray, u_dir: np.ndarray,
                  excluded_a, excluded_b) -> np.ndarray:
        """One pedestrian step for a batch: stay w.p. ped_stay_prob, else a
        uniform free in-window 8-neighbor. Aware pedestrians never step into
        the excluded cells (robot current / next); boxed-in pedestrians stay.

        `excluded_a`/`excluded_b` broadcast against (M,) rows; -1 disables.
        """
        if cells.size == 0:
            return cells.copy()
        nbrs = self.free_nbrs[cells]                     # (M, N, 8)
        valid = nbrs >= 0
        if self.transitions.aware_avoidance:
            ex_a = np.broadcast_to(np.asarray(excluded_a).reshape(-1, 1, 1), nbrs.shape)
            ex_b = np.broadcast_to(np.asarray(excluded_b).reshape(-1, 1, 1), nbrs.shape)
            banned = (nbrs == ex_a) | (nbrs == ex_b)
            valid = valid & ~((aware == AWARE)[:, :, None] & banned)
        n_valid = valid.sum(axis=2)
        move = (u_stay >= self.transitions.ped_stay_prob) & (n_valid > 0)
        rank = np.minimum((u_dir * np.maximum(n_valid, 1)).astype(np.int64),
                          np.maximum(n_valid - 1, 0)) + 1
        csum = np.cumsum(valid, axis=2)
        slot = np.argmax(csum == rank[:, :, None], axis=2)
        chosen = np.take_along_axis(nbrs, slot[:, :, None], axis=2)[:, :, 0]
        return np.where(move, chosen, cells)

    def observe_cells(self, cells: np.ndarray, robot_index: int,
                      u_type: np.ndarray, u_adj: np.ndarray) -> np.ndarray:
        """Sample per-ped observed cells for a batch; -1 encodes 'absent'.

        Mixture per visible pedestrian: absent w.p. miss_prob, a uniform free
        adjacent cell w.p. adjacent_noise_prob (folded into the true cell when
        there is none), else the true cell. Out-of-sector pedestrians are
        always absent.
        """
        if cells.size == 0:
            return cells.copy()
        p = self.observations
        vis = self.visibility(robot_index)[cells]
        n_adj = self.n_free_nbrs[cells]
        absent = u_type < p.miss_prob
        noisy = (~absent & (u_type < p.miss_prob + p.adjacent_noise_prob) & (n_adj > 0))
        nbrs = self.free_nbrs[cells]
        rank = np.minimum((u_adj * np.maximum(n_adj, 1)).astype(np.int64),
                          np.maximum(n_adj - 1, 0)) + 1
        csum = np.cumsum(nbrs >= 0, axis=2)
        slot = np.argmax(csum == rank[:, :, None], axis=2)
        adj_cell = np.take_along_axis(nbrs, slot[:, :, None], axis=2)[:, :, 0]
        out = np.where(noisy, adj_cell, cells)
        out = np.where(absent | ~vis, -1, out)
        return out

    def observe_gaze(self, aware: np.ndarray, obs_cells: np.ndarray,
                     u_gaze: np.ndarray) -> np.ndarray:
        """Gaze flags: true awareness observed through a false-negative channel,
        only for pedestrians whose cell was observed this step."""
        return (aware == AWARE) & (obs_cells >= 0) & (u_gaze >= self.observations.gaze_false_negative)

    def likelihood_tables(self, o: LocalObservation, robot_index: int):
        """Per-ped lookup tables L[cell] = P(observed cell outcome | ped at cell),
        plus (aware, unaware) gaze factors. Used by the belief filter."""
        p = self.observations
        vis = self.visibility(robot_index)
        n = self.window.width * self.window.height
        tables = []
        gaze_factors = []
        for cell_obs, flag in zip(o.ped_cells, o.gaze_flags):
            table = np.zeros(n)
            if cell_obs is None:
                table[vis] = p.miss_prob
                table[~vis] = 1.0
                observed = False
            else:
                cid = self.cell_id(cell_obs)
                observed = True
                if cid >= 0:
                    if self.free[cid]:
                        # true-cell emission
                        if vis[cid]:
                            fold = p.adjacent_noise_prob if self.n_free_nbrs[cid] == 0 else 0.0
                            table[cid] = 1.0 - p.miss_prob - p.adjacent_noise_prob + fold
                        # adjacent-noise emission from every cell neighboring the observed one
                        for src in self.all_nbrs[cid]:
                            if src >= 0 and vis[src] and self.n_free_nbrs[src] > 0:
                                table[src] += p.adjacent_noise_prob / self.n_free_nbrs[src]
                    elif vis[cid]:
                        fold = p.adjacent_noise_prob if self.n_free_nbrs[cid] == 0 else 0.0
                        table[cid] = 1.0 - p.miss_prob - p.adjacent_noise_prob + fold
            if flag:
                fa = (1.0 - p.gaze_false_negative) if observed else 0.0
                fu = 0.0
            else:
                fa = p.gaze_false_negative if observed else 1.0
                fu = 1.0
            tables.append(table)
            gaze_factors.append((fa, fu))
        return tables, gaze_factors

    def likelihood_batch(self, cells: np.ndarray, aware: np.ndarray,
                         robot_index: int, o: LocalObservation) -> np.ndarray:
        """P(o | state) for each particle row; includes the robot-cell indicator."""
        m = cells.shape[0]
        weights = np.ones(m)
        if o.robot_cell != self.path.waypoints[robot_index]:
            return np.zeros(m)
        tables, gaze_factors = self.likelihood_tables(o, robot_index)
        for n, (table, (fa, fu)) in enumerate(zip(tables, gaze_factors)):
            weights *= table[cells[:, n]]
            weights *= np.where(aware[:, n] == AWARE, fa, fu)
        return weights

    def reward_batch(self, prev_index: int, action: LocalAction, next_index: int,
                     cells: np.ndarray, aware: np.ndarray) -> np.ndarray:
        """Reward of the (s, a, s') transition for each batch row."""
        rp = self.rewards
        m = cells.shape[0]
        r = np.full(m, rp.time_weight * rp.time_penalty)
        if action == LocalAction.AVOID:
            r += rp.avoid_cost
        if next_index == self.last_index and prev_index != self.last_index:
            r += rp.goal_weight * rp.goal_reward
        if cells.shape[1]:
            rx, ry = self.robot_xy[next_index]
            d = np.hypot(self.cx[cells] - rx, self.cy[cells] - ry)
            radius = np.where(aware == AWARE, rp.aware_radius_m, rp.unaware_radius_m)
            if rp.collision_ramp:
                hit = np.where(d <= radius, 1.0 - d / radius, 0.0)
            else:
                hit = (d <= radius).astype(float)
            r += rp.collision_weight * rp.collision_penalty * hit.sum(axis=1)
        return r

    def terminal_batch(self, robot_index: int, cells: np.ndarray, step: int) -> np.ndarray:
        m = cells.shape[0]
        if robot_index == self.last_index or step >= self.step_cap:
            return np.ones(m, dtype=bool)
        rid = self.robot_cell_ids[robot_index]
        if cells.shape[1] == 0 or rid < 0:
            return np.zeros(m, dtype=bool)
        return (cells == rid).any(axis=1)

    # --- scalar generative API -----------------------------------------------------

    def transition(self, s: PomdpState, a: LocalAction,
                   rng: np.random.Generator) -> PomdpState:
        """Sample the next state; terminal states self-loop."""
        if self.is_terminal(s):
            return s
        next_index = self.advance_index(s.robot_path_index, a)
        n = len(s.peds)
        cells, aware = self.state_arrays(s)
        u = rng.random((2, 1, n)) if n else np.zeros((2, 1, 0))
        ex_a = self.robot_cell_ids[next_index]
        ex_b = self.robot_cell_ids[min(next_index + 1, self.last_index)]
        new_cells = self.step_peds(cells, aware, u[0], u[1],
                                   np.array([ex_a]), np.array([ex_b]))
        return self.make_state(next_index, new_cells[0], aware[0], s.step + 1)

    def observe(self, s_next: PomdpState, a: LocalAction,
                rng: np.random.Generator) -> LocalObservation:
        """Sample an observation of s_next (robot cell exact, ped cells noisy)."""
        n = len(s_next.peds)
        cells, aware = self.state_arrays(s_next)
        u = rng.random((3, 1, n)) if n else np.zeros((3, 1, 0))
        obs_cells = self.observe_cells(cells, s_next.robot_path_index, u[0], u[1])
        gaze = self.observe_gaze(aware, obs_cells, u[2])
        ped_cells = tuple(self.id_to_cell(int(c)) if c >= 0 else None
                          for c in obs_cells[0])
        return LocalObservation(self.path.waypoints[s_next.robot_path_index],
                                ped_cells, tuple(bool(g) for g in gaze[0]))

    def obs_likelihood(self, s_next: PomdpState, a: LocalAction,
                       o: LocalObservation) -> float:
        cells, aware = self.state_arrays(s_next)
        return float(self.likelihood_batch(cells, aware, s_next.robot_path_index, o)[0])

    def reward(self, s: PomdpState, a: LocalAction, s_next: PomdpState) -> float:
        cells, aware = self.state_arrays(s_next)
        return float(self.reward_batch(s.robot_path_index, a, s_next.robot_path_index,
                                       cells, aware)[0])

    def is_terminal(self, s: PomdpState) -> bool:
        cells, _ = self.state_arrays(s)
        return bool(self.terminal_batch(s.robot_path_index, cells, s.step)[0])

    def collision_radius(self, awareness: int) -> float:
        return collision_radius(awareness, self.rewards)
