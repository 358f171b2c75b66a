from __future__ import annotations

import numpy as np
import pytest

from awarenav.belief import ParticleBelief
from awarenav.despot import (DespotParams, InvalidBudgetError, SolveResult,
                             sample_scenarios, solve)
from awarenav.grid import GridIndex, OccupancyGrid
from awarenav.mdp_planner import GlobalPath
from awarenav.pomdp_model import (AWARE, UNAWARE, LocalAction, NavigationPomdp,
                                  ObservationParams, RewardParams,
                                  TransitionParams, WindowRect)

RES = 0.75
NOISELESS = ObservationParams(miss_prob=0.0, adjacent_noise_prob=0.0,
                              gaze_false_negative=0.0)


def uniform_belief(model, cells, aware, k=64):
    return ParticleBelief(0, 0, cells, aware, np.full(k, 1.0 / k),
                          tuple(range(cells.shape[1])), model.window)


def empty_belief(model, k=64):
    return uniform_belief(model, np.zeros((k, 0), dtype=np.int64),
                          np.zeros((k, 0), dtype=np.int8), k)


def point_belief(model, ped_cells, awarenesses, k=64):
    ids = [model.cell_id(c) for c in ped_cells]
    cells = np.tile(np.array(ids, dtype=np.int64), (k, 1))
    aware = np.tile(np.array(awarenesses, dtype=np.int8), (k, 1))
    return uniform_belief(model, cells, aware, k)


def corridor_model(length, rewards=None, transitions=None, observations=None,
                   height=10, width=10):
    grid = OccupancyGrid(width, height, RES)
    path = GlobalPath([GridIndex(i, 1) for i in range(length)], RES)
    return NavigationPomdp(grid, path, WindowRect.from_grid(grid),
                           rewards=rewards, transitions=transitions,
                           observations=observations)


# --- brute-force determinized expectimax oracle ------------------------------------

def expectimax(model, scen, rows, cells, robot_index, depth, horizon, gamma):
    """Exact value/action of the scenario tree by plain recursive enumeration."""
    m = rows.shape[0]
    aware = scen.aware[rows]
    best_v, best_a = None, None
    for a in model.actions:
        nxt = model.advance_index(robot_index, a)
        u = scen.tables[rows, depth]
        new_cells = model.step_peds(
            cells, aware, u[:, 0], u[:, 1],
            np.full(m, model.robot_cell_ids[nxt]),
            np.full(m, model.robot_cell_ids[min(nxt + 1, model.last_index)]))
        v = float(model.reward_batch(robot_index, a, nxt, new_cells, aware).mean())
        term = np.full(m, nxt == model.last_index)
        rid = model.robot_cell_ids[nxt]
        if new_cells.shape[1] and rid >= 0:
            term |= (new_cells == rid).any(axis=1)
        live = np.flatnonzero(~term)
        if depth + 1 < horizon and live.size:
            if new_cells.shape[1]:
                obs_c = model.observe_cells(new_cells[live], nxt,
                                            u[live, 2], u[live, 3])
                gz = model.observe_gaze(aware[live], obs_c, u[live, 4])
                keys = [tuple(obs_c[i]) + tuple(gz[i]) for i in range(live.size)]
            else:
                keys = [()] * live.size
            groups: dict[tuple, list[int]] = {}
            for i, key in enumerate(keys):
                groups.setdefault(key, []).append(i)
            for members in groups.values():
                pick = np.array(members)
                sub, _ = expectimax(model, scen, rows[live][pick],
                                    new_cells[live][pick], nxt, depth + 1,
                                    horizon, gamma)
                v += gamma * (pick.size / m) * sub
        if best_v is None or v > best_v:
            best_v, best_a = v, a
    return best_v, best_a


def random_instance(seed):
    rng = np.random.default_rng(seed)
    grid = OccupancyGrid(5, 5, RES)
    for i in range(5):
        for j in range(5):
            if j != 2 and rng.random() < 0.15:
                grid.set_occupancy(GridIndex(i, j), 1)
    length = int(rng.integers(3, 6))
    path = GlobalPath([GridIndex(i, 2) for i in range(length)], RES)
    model = NavigationPomdp(
        grid, path, WindowRect.from_grid(grid),
        rewards=RewardParams(aware_radius_m=0.4, unaware_radius_m=0.8,
                             goal_reward=float(rng.uniform(5, 50)),
                             collision_penalty=float(rng.uniform(-30, -5))),
        transitions=TransitionParams(ped_stay_prob=float(rng.uniform(0.2, 0.8))),
        observations=ObservationParams(
            miss_prob=float(rng.uniform(0, 0.2)),
            adjacent_noise_prob=float(rng.uniform(0, 0.3)),
            gaze_false_negative=float(rng.uniform(0, 0.3))))
    n_peds = int(rng.integers(1, 3))
    free_ids = np.flatnonzero(model.free)
    k_part = 64
    cells = rng.choice(free_ids, size=(k_part, n_peds)).astype(np.int64)
    aware = rng.choice(np.array([AWARE, UNAWARE], dtype=np.int8),
                       size=(k_part, n_peds))
    belief = uniform_belief(model, cells, aware, k_part)
    params = DespotParams(k_scenarios=int(rng.integers(8, 17)), max_depth=2,
                          gamma=0.95, time_budget_ms=1e9,
                          regularization_lambda=0.0, max_trials=100_000,
                          gap_tolerance=0.0, seed=seed)
    return model, belief, params


def oracle_for(model, belief, params, scen_seed):
    scen = sample_scenarios(belief, params, np.random.default_rng(scen_seed))
    rid0 = model.robot_cell_ids[scen.robot_index]
    live = np.ones(scen.k, dtype=bool)
    if scen.cells.shape[1] and rid0 >= 0:
        live = ~(scen.cells == rid0).any(axis=1)
    if not live.any():
        return None, None
    rows = np.flatnonzero(live)
    return expectimax(model, scen, rows, scen.cells[live], scen.robot_index,
                      0, params.max_depth, params.gamma)


def test_matches_expectimax_oracle_on_random_instances():
    agree = total = 0
    for seed in range(100):
        model, belief, params = random_instance(seed)
        v_star, a_star = oracle_for(model, belief, params, seed + 999)
        if a_star is None:
            continue
        result = solve(model, belief, params, np.random.default_rng(seed + 999))
        total += 1
        if result.action == a_star:
            agree += 1
        if result.root_upper - result.root_lower <= 1e-9:
            assert result.root_lower == pytest.approx(v_star, abs=1e-6)
    assert total >= 90
    assert agree >= 0.95 * total


def test_bounds_sandwich_oracle_value_before_convergence():
    for seed in range(30):
        model, belief, params = random_instance(seed)
        v_star, a_star = oracle_for(model, belief, params, seed + 999)
        if a_star is None:
            continue
        params.max_trials = 2
        result = solve(model, belief, params, np.random.default_rng(seed + 999))
        assert result.root_lower - 1e-9 <= v_star <= result.root_upper + 1e-9


def test_zero_budget_returns_wait_fallback():
    model = corridor_model(4)
    result = solve(model, empty_belief(model),
                   DespotParams(time_budget_ms=0.0, seed=0))
    assert result == SolveResult(LocalAction.WAIT, 0.0, 0.0, 0, 0, 0, True)


def test_all_scenarios_terminal_returns_wait_fallback():
    model = corridor_model(4)
    belief = point_belief(model, [GridIndex(0, 1)], [UNAWARE])  # on the robot
    result = solve(model, belief, DespotParams(seed=0))
    assert result.action == LocalAction.WAIT
    assert result.fallback


def test_empty_corridor_converges_to_exact_goal_value():
    g = 0.95
    model = corridor_model(4)  # three hops to the goal
    params = DespotParams(k_scenarios=16, max_depth=5, gamma=g,
                          time_budget_ms=1e9, seed=1)
    result = solve(model, empty_belief(model), params)
    expected = -(1 + g + g**2) + g**2 * 1000.0
    assert result.action == LocalAction.GO
    assert not result.fallback
    assert result.root_lower == pytest.approx(expected, abs=1e-9)
    assert result.root_upper == pytest.approx(expected, abs=1e-9)


def test_unaware_pedestrian_on_path_waits():
    model = corridor_model(
        6, rewards=RewardParams(aware_radius_m=0.4, unaware_radius_m=0.8),
        transitions=TransitionParams(ped_stay_prob=1.0), observations=NOISELESS)
    belief = point_belief(model, [GridIndex(2, 1)], [UNAWARE])
    result = solve(model, belief,
                   DespotParams(k_scenarios=8, time_budget_ms=1e9,
                                regularization_lambda=0.0, seed=2))
    assert result.action == LocalAction.WAIT
    assert not result.fallback
    # with regularization the searched value ties the default policy, so the
    # solver falls back, but the chosen action must not change
    reg = solve(model, belief,
                DespotParams(k_scenarios=8, time_budget_ms=1e9, seed=2))
    assert reg.action == LocalAction.WAIT


def test_aware_pedestrian_near_path_goes():
    model = corridor_model(
        6, rewards=RewardParams(aware_radius_m=0.4, unaware_radius_m=0.8),
        transitions=TransitionParams(ped_stay_prob=1.0), observations=NOISELESS)
    belief = point_belief(model, [GridIndex(2, 2)], [AWARE])
    result = solve(model, belief,
                   DespotParams(k_scenarios=8, time_budget_ms=1e9,
                                regularization_lambda=0.0, seed=3))
    assert result.action == LocalAction.GO
    assert not result.fallback
    reg = solve(model, belief,
                DespotParams(k_scenarios=8, time_budget_ms=1e9, seed=3))
    assert reg.action == LocalAction.GO


def test_gap_shrinks_with_more_trials():
    model, belief, params = random_instance(7)
    params.gap_tolerance = 0.0
    params.max_trials = 1
    one = solve(model, belief, params, np.random.default_rng(55))
    params.max_trials = 40
    many = solve(model, belief, params, np.random.default_rng(55))
    assert many.root_upper - many.root_lower <= one.root_upper - one.root_lower + 1e-12
    assert many.root_lower >= one.root_lower - 1e-12
    assert many.root_upper <= one.root_upper + 1e-12


def test_deterministic_given_seed():
    model, belief, params = random_instance(11)
    a = solve(model, belief, params, np.random.default_rng(77))
    b = solve(model, belief, params, np.random.default_rng(77))
    assert a == b


def test_seed_param_used_when_no_rng_passed():
    model, belief, params = random_instance(13)
    assert solve(model, belief, params) == solve(model, belief, params)


def test_nodes_expanded_within_tree_size_bound():
    for seed in (0, 3, 9):
        model, belief, params = random_instance(seed)
        result = solve(model, belief, params, np.random.default_rng(seed))
        bound = len(model.actions) ** params.max_depth * params.k_scenarios
        assert result.nodes_expanded <= bound


def test_huge_regularization_falls_back_to_default_action():
    model, belief, params = random_instance(7)
    params.regularization_lambda = 1e9
    params.max_trials = 50
    result = solve(model, belief, params, np.random.default_rng(7))
    assert result.fallback

    # expected default: majority vote of "no unaware ped within its comfort
    # radius of the next path cell" over the root's live scenarios
    scen = sample_scenarios(belief, params, np.random.default_rng(7))
    rid0 = model.robot_cell_ids[0]
    live = ~(scen.cells == rid0).any(axis=1)
    nxt = min(1, model.last_index)
    d = np.hypot(model.cx[scen.cells[live]] - model.robot_xy[nxt, 0],
                 model.cy[scen.cells[live]] - model.robot_xy[nxt, 1])
    blocked = ((scen.aware[live] == UNAWARE)
               & (d <= model.rewards.unaware_radius_m)).any(axis=1)
    expected = (LocalAction.GO if 2 * (~blocked).sum() >= blocked.size
                else LocalAction.WAIT)
    assert result.action == expected


def test_trial_cap_respected():
    model, belief, params = random_instance(17)
    params.max_trials = 1
    result = solve(model, belief, params, np.random.default_rng(17))
    assert result.trials == 1


def test_first_trial_runs_even_on_tiny_budget():
    model, belief, params = random_instance(19)
    params.time_budget_ms = 1e-6
    result = solve(model, belief, params, np.random.default_rng(19))
    assert result.trials == 1
    assert result.scenario_steps > 0


def test_sample_scenarios_point_mass_and_shapes():
    model = corridor_model(4)
    belief = point_belief(model, [GridIndex(5, 5)], [AWARE], k=32)
    params = DespotParams(k_scenarios=12, max_depth=6, seed=0)
    scen = sample_scenarios(belief, params, np.random.default_rng(5))
    assert scen.k == 12
    assert np.all(scen.cells == model.cell_id(GridIndex(5, 5)))
    assert np.all(scen.aware == AWARE)
    assert scen.tables.shape == (12, 6, 5, 1)
    assert np.all((scen.tables >= 0) & (scen.tables < 1))


def test_param_validation():
    with pytest.raises(InvalidBudgetError):
        DespotParams(k_scenarios=0)
    with pytest.raises(InvalidBudgetError):
        DespotParams(gamma=0.0)
    with pytest.raises(InvalidBudgetError):
        DespotParams(virtual_step_ms=0.0)
    with pytest.raises(InvalidBudgetError):
        DespotParams(max_trials=0)
