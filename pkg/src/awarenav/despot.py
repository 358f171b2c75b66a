"""Anytime online planner: determinized sparse tree search over scenarios
sampled from the particle belief.

Each scenario is a start particle plus a table of pre-drawn uniforms, so every
random outcome in the tree is a pure function of the scenario set and the
search is bit-for-bit reproducible. The per-step planning budget is virtual:
one pedestrian transition of one scenario costs ``virtual_step_ms``, which
keeps results identical across machines instead of depending on wall clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .belief import ParticleBelief
from .pomdp_model import AWARE, DRAWS_PER_PED, LocalAction, NavigationPomdp

_BOUND_EPS = 1e-12


class InvalidBudgetError(ValueError):
    """Planner parameter outside its valid range."""


@dataclass
class DespotParams:
    k_scenarios: int = 500
    max_depth: int = 10
    gamma: float = 0.95
    time_budget_ms: float = 100.0
    regularization_lambda: float = 0.01
    max_trials: int | None = None
    gap_tolerance: float = 1e-6
    virtual_step_ms: float = 0.005
    seed: int | None = None

    def __post_init__(self):
        if self.k_scenarios < 1:
            raise InvalidBudgetError("k_scenarios must be at least 1")
        if self.max_depth < 1:
            raise InvalidBudgetError("max_depth must be at least 1")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidBudgetError("gamma must lie in (0, 1]")
        if self.virtual_step_ms <= 0:
            raise InvalidBudgetError("virtual_step_ms must be positive")
        if self.regularization_lambda < 0:
            raise InvalidBudgetError("regularization_lambda must be non-negative")
        if self.gap_tolerance < 0:
            raise InvalidBudgetError("gap_tolerance must be non-negative")
        if self.max_trials is not None and self.max_trials < 1:
            raise InvalidBudgetError("max_trials must be at least 1 when set")


@dataclass(frozen=True)
class ScenarioSet:
    """K start particles plus uniforms for every (depth, ped, draw slot)."""

    cells: np.ndarray     # (K, N) window cell ids
    aware: np.ndarray     # (K, N) in {-1, +1}
    tables: np.ndarray    # (K, max_depth, DRAWS_PER_PED, N) uniforms
    robot_index: int

    @property
    def k(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True)
class SolveResult:
    action: LocalAction
    root_lower: float
    root_upper: float
    nodes_expanded: int
    trials: int
    scenario_steps: int
    fallback: bool


def sample_scenarios(belief: ParticleBelief, params: DespotParams,
                     rng: np.random.Generator) -> ScenarioSet:
    rows = rng.choice(belief.k_particles, size=params.k_scenarios, p=belief.weights)
    tables = rng.random((params.k_scenarios, params.max_depth,
                         DRAWS_PER_PED, belief.n_peds))
    return ScenarioSet(belief.cells[rows].copy(), belief.aware[rows].copy(),
                       tables, belief.robot_path_index)


class _Node:
    __slots__ = ("depth", "robot_index", "rows", "cells", "lower", "upper",
                 "default_value", "children", "action_reward")

    def __init__(self, depth: int, robot_index: int, rows: np.ndarray,
                 cells: np.ndarray):
        self.depth = depth
        self.robot_index = robot_index
        self.rows = rows
        self.cells = cells
        self.lower = 0.0
        self.upper = 0.0
        self.default_value = 0.0
        self.children: list[list[tuple["_Node", float]]] | None = None
        self.action_reward: np.ndarray | None = None


class _Search:
    def __init__(self, model: NavigationPomdp, scen: ScenarioSet,
                 params: DespotParams):
        self.model = model
        self.scen = scen
        self.p = params
        self.steps = 0
        self.nodes_expanded = 0
        self.trials = 0

    # --- per-row helpers (robot index varies across scenarios in rollouts) -------

    def _default_go(self, cells: np.ndarray, aware: np.ndarray,
                    idx: np.ndarray) -> np.ndarray:
        """Default policy: advance unless an unaware pedestrian sits within its
        comfort radius of the next path cell."""
        m = self.model
        if cells.shape[1] == 0:
            return np.ones(cells.shape[0], dtype=bool)
        nxt = np.minimum(idx + 1, m.last_index)
        d = np.hypot(m.cx[cells] - m.robot_xy[nxt, 0][:, None],
                     m.cy[cells] - m.robot_xy[nxt, 1][:, None])
        blocking = (aware != AWARE) & (d <= m.rewards.unaware_radius_m)
        return ~blocking.any(axis=1)

    def _reward_rows(self, prev_idx: np.ndarray, next_idx: np.ndarray,
                     cells: np.ndarray, aware: np.ndarray) -> np.ndarray:
        rp = self.model.rewards
        r = np.full(cells.shape[0], rp.time_weight * rp.time_penalty)
        entry = (next_idx == self.model.last_index) & (prev_idx != self.model.last_index)
        r = r + np.where(entry, rp.goal_weight * rp.goal_reward, 0.0)
        if cells.shape[1]:
            m = self.model
            d = np.hypot(m.cx[cells] - m.robot_xy[next_idx, 0][:, None],
                         m.cy[cells] - m.robot_xy[next_idx, 1][:, None])
            radius = np.where(aware == AWARE, rp.aware_radius_m, rp.unaware_radius_m)
            if rp.collision_ramp:
                hit = np.where(d <= radius, 1.0 - d / radius, 0.0)
            else:
                hit = (d <= radius).astype(float)
            r = r + rp.collision_weight * rp.collision_penalty * hit.sum(axis=1)
        return r

    def _terminal_rows(self, idx: np.ndarray, cells: np.ndarray) -> np.ndarray:
        rid = self.model.robot_cell_ids[idx]
        done = idx == self.model.last_index
        if cells.shape[1]:
            done = done | ((cells == rid[:, None]) & (rid[:, None] >= 0)).any(axis=1)
        return done

    def _rollout_groups(self, rows: np.ndarray, cells: np.ndarray,
                        group_ids: np.ndarray, start_idx: np.ndarray,
                        depth: int) -> np.ndarray:
        """Mean discounted default-policy return of each group, blind to
        observations. All groups advance in one batched pass; group g starts
        with the robot at path index ``start_idx[g]``.

        Within a group one action per step is majority-voted across its
        still-running scenarios; a per-scenario action choice would peek at
        hidden state and inflate the bound.
        """
        n_groups = start_idx.shape[0]
        out = np.zeros(n_groups)
        m = rows.shape[0]
        if m == 0 or depth >= self.p.max_depth:
            return out
        model = self.model
        aware = self.scen.aware[rows]
        cells = cells.copy()
        idx = start_idx.copy()
        alive = np.ones(m, dtype=bool)
        ret = np.zeros(m)
        disc = 1.0
        for t in range(depth, self.p.max_depth):
            if not alive.any():
                break
            row_idx = idx[group_ids]
            go = self._default_go(cells, aware, row_idx)
            yays = np.bincount(group_ids, weights=(go & alive).astype(float),
                               minlength=n_groups)
            voters = np.bincount(group_ids, weights=alive.astype(float),
                                 minlength=n_groups)
            nxt = np.where(2.0 * yays >= voters,
                           np.minimum(idx + 1, model.last_index), idx)
            row_nxt = nxt[group_ids]
            u = self.scen.tables[rows, t]
            new_cells = model.step_peds(
                cells, aware, u[:, 0], u[:, 1],
                model.robot_cell_ids[row_nxt],
                model.robot_cell_ids[np.minimum(row_nxt + 1, model.last_index)])
            r = self._reward_rows(row_idx, row_nxt, new_cells, aware)
            ret += np.where(alive, disc * r, 0.0)
            self.steps += int(alive.sum())
            term = self._terminal_rows(row_nxt, new_cells)
            cells = np.where(alive[:, None], new_cells, cells) if cells.size else cells
            alive &= ~term
            idx = nxt
            disc *= self.p.gamma
        sums = np.bincount(group_ids, weights=ret, minlength=n_groups)
        counts = np.bincount(group_ids, minlength=n_groups)
        return sums / np.maximum(counts, 1)

    def _rollout(self, rows: np.ndarray, cells: np.ndarray, robot_index: int,
                 depth: int) -> float:
        group = np.zeros(rows.shape[0], dtype=np.int64)
        start = np.array([robot_index], dtype=np.int64)
        return float(self._rollout_groups(rows, cells, group, start, depth)[0])

    def _upper(self, robot_index: int, depth: int) -> float:
        """Admissible scalar bound: best of reaching the goal as early or as
        late as the horizon allows, terminating immediately, or idling out."""
        rem = self.p.max_depth - depth
        if rem <= 0:
            return 0.0
        rp = self.model.rewards
        g = self.p.gamma
        wt_rt = rp.time_weight * rp.time_penalty
        wg_rg = rp.goal_weight * rp.goal_reward

        def time_sum(steps: int) -> float:
            if g == 1.0:
                return wt_rt * steps
            return wt_rt * (1.0 - g ** steps) / (1.0 - g)

        cands = [time_sum(1), time_sum(rem)]
        dist = self.model.last_index - robot_index
        if 0 < dist <= rem:
            cands.append(time_sum(dist) + g ** (dist - 1) * wg_rg)
            cands.append(time_sum(rem) + g ** (rem - 1) * wg_rg)
        return max(cands)

    # --- tree construction ---------------------------------------------------------

    def _make_node(self, depth: int, robot_index: int, rows: np.ndarray,
                   cells: np.ndarray) -> _Node:
        node = _Node(depth, robot_index, rows, cells)
        node.lower = node.default_value = self._rollout(rows, cells, robot_index, depth)
        node.upper = max(self._upper(robot_index, depth), node.lower)
        return node

    def _expand(self, node: _Node) -> None:
        model = self.model
        m = node.rows.shape[0]
        d = node.depth
        u = self.scen.tables[node.rows, d]
        aware = self.scen.aware[node.rows]
        node.children = []
        node.action_reward = np.zeros(len(model.actions))
        # per-action grouped rows, rolled out in one batched pass at the end
        batch_rows, batch_cells, batch_groups, batch_idx = [], [], [], []
        pending: list[tuple[int, int, np.ndarray, np.ndarray, np.ndarray, int]] = []
        for a in model.actions:
            nxt = model.advance_index(node.robot_index, a)
            ex_a = np.full(m, model.robot_cell_ids[nxt])
            ex_b = np.full(m, model.robot_cell_ids[min(nxt + 1, model.last_index)])
            new_cells = model.step_peds(node.cells, aware, u[:, 0], u[:, 1], ex_a, ex_b)
            node.action_reward[a] = model.reward_batch(
                node.robot_index, a, nxt, new_cells, aware).mean()
            self.steps += m
            node.children.append([])
            if d + 1 >= self.p.max_depth:
                continue
            live = ~self._terminal_rows(np.full(m, nxt), new_cells)
            if not live.any():
                continue
            if new_cells.shape[1] == 0:
                groups = np.zeros(int(live.sum()), dtype=np.int64)
            else:
                obs_c = model.observe_cells(new_cells[live], nxt,
                                            u[live, 2], u[live, 3])
                gaze = model.observe_gaze(aware[live], obs_c, u[live, 4])
                key = np.concatenate([obs_c, gaze.astype(np.int64)], axis=1)
                _, groups = np.unique(key, axis=0, return_inverse=True)
                groups = groups.reshape(-1)
            n_groups = int(groups.max()) + 1 if groups.size else 0
            offset = sum(len(ix) for ix in batch_idx)
            batch_rows.append(node.rows[live])
            batch_cells.append(new_cells[live])
            batch_groups.append(groups + offset)
            batch_idx.append(np.full(n_groups, nxt, dtype=np.int64))
            pending.append((a, nxt, node.rows[live], new_cells[live], groups,
                            n_groups))
        if pending:
            values = self._rollout_groups(
                np.concatenate(batch_rows), np.concatenate(batch_cells),
                np.concatenate(batch_groups), np.concatenate(batch_idx), d + 1)
            offset = 0
            for a, nxt, live_rows, live_cells, groups, n_groups in pending:
                upper = self._upper(nxt, d + 1)
                order = np.argsort(groups, kind="stable")
                counts = np.bincount(groups, minlength=n_groups)
                row_chunks = np.split(live_rows[order], np.cumsum(counts)[:-1])
                cell_chunks = np.split(live_cells[order], np.cumsum(counts)[:-1])
                kids = node.children[a]
                for gid in range(n_groups):
                    child = _Node(d + 1, nxt, row_chunks[gid], cell_chunks[gid])
                    child.lower = child.default_value = float(values[offset + gid])
                    child.upper = max(upper, child.lower)
                    kids.append((child, float(counts[gid]) / m))
                offset += n_groups
        self.nodes_expanded += 1

    def _action_bounds(self, node: _Node) -> tuple[np.ndarray, np.ndarray]:
        n_act = len(self.model.actions)
        ql = node.action_reward.copy()
        qu = node.action_reward.copy()
        for a in range(n_act):
            for child, frac in node.children[a]:
                ql[a] += self.p.gamma * frac * child.lower
                qu[a] += self.p.gamma * frac * child.upper
        return ql, qu

    def _backup(self, node: _Node) -> bool:
        ql, qu = self._action_bounds(node)
        new_u = min(node.upper, float(qu.max()))
        new_l = min(max(node.lower, float(ql.max())), new_u)
        changed = (abs(new_u - node.upper) > _BOUND_EPS
                   or abs(new_l - node.lower) > _BOUND_EPS)
        node.upper, node.lower = new_u, new_l
        return changed

    def _trial(self, root: _Node) -> bool:
        path = [root]
        node = root
        while node.children is not None:
            _, qu = self._action_bounds(node)
            best_a = int(np.argmax(qu))
            best_child, best_score = None, 0.0
            for child, frac in node.children[best_a]:
                gap = child.upper - child.lower
                if gap <= self.p.gap_tolerance:
                    continue
                score = frac * gap
                if best_child is None or score > best_score:
                    best_child, best_score = child, score
            if best_child is None:
                break
            node = best_child
            path.append(node)
        progressed = False
        if node.children is None and node.depth < self.p.max_depth:
            self._expand(node)
            progressed = True
        for nd in reversed(path):
            progressed |= self._backup(nd)
        self.trials += 1
        return progressed


def solve(model: NavigationPomdp, belief: ParticleBelief,
          params: DespotParams | None = None,
          rng: np.random.Generator | None = None) -> SolveResult:
    """Pick the next local action. Returns a fallback Wait when no planning
    budget is available and flags any result that fell back to the default
    policy because the regularized search value did not beat it."""
    params = params or DespotParams()
    if rng is None:
        rng = np.random.default_rng(params.seed)
    if params.time_budget_ms <= 0:
        return SolveResult(LocalAction.WAIT, 0.0, 0.0, 0, 0, 0, True)

    scen = sample_scenarios(belief, params, rng)
    search = _Search(model, scen, params)

    rows = np.arange(scen.k)
    live = ~search._terminal_rows(np.full(scen.k, scen.robot_index), scen.cells)
    if not live.any():
        return SolveResult(LocalAction.WAIT, 0.0, 0.0, 0, 0, 0, True)
    root = search._make_node(0, scen.robot_index, rows[live], scen.cells[live])

    # the first trial always runs so an anytime result exists; afterwards the
    # virtual budget and trial cap gate further work
    max_trials = math.inf if params.max_trials is None else params.max_trials
    while root.upper - root.lower > params.gap_tolerance:
        out_of_budget = (search.steps * params.virtual_step_ms
                         >= params.time_budget_ms)
        if search.trials >= 1 and (out_of_budget or search.trials >= max_trials):
            break
        if not search._trial(root):
            break

    go_share = int(search._default_go(
        root.cells, scen.aware[root.rows],
        np.full(root.rows.shape[0], root.robot_index)).sum())
    default_action = (LocalAction.GO if 2 * go_share >= root.rows.shape[0]
                      else LocalAction.WAIT)

    if root.children is None:
        converged = root.upper - root.lower <= params.gap_tolerance
        return SolveResult(default_action, root.lower, root.upper,
                           search.nodes_expanded, search.trials, search.steps,
                           not converged)

    ql, _ = search._action_bounds(root)
    reg = ql - params.regularization_lambda * _subtree_sizes(root) / scen.k
    best = int(np.argmax(reg))
    if reg[best] < root.default_value - _BOUND_EPS:
        return SolveResult(default_action, root.lower, root.upper,
                           search.nodes_expanded, search.trials, search.steps, True)
    return SolveResult(LocalAction(best), root.lower, root.upper,
                       search.nodes_expanded, search.trials, search.steps, False)


def _count_nodes(node: _Node) -> int:
    total = 1
    if node.children is not None:
        for kids in node.children:
            for child, _ in kids:
                total += _count_nodes(child)
    return total


def _subtree_sizes(root: _Node) -> np.ndarray:
    sizes = np.zeros(len(root.children))
    for a, kids in enumerate(root.children):
        sizes[a] = sum(_count_nodes(child) for child, _ in kids)
    return sizes
