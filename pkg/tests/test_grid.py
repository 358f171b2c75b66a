from __future__ import annotations

import numpy as np
import pytest

from awarenav.grid import (GlobalAction, GridIndex, MapFormatError, Occupancy,
                           OccupancyGrid, OutOfBoundsError, WindowTooLargeError,
                           dump_map_text, local_window, parse_map_text)


def make_grid(width=10, height=10, resolution=0.75):
    return OccupancyGrid(width, height, resolution)


def test_world_to_grid_origin_cell():
    g = make_grid()
    assert g.world_to_grid(0.0, 0.0) == GridIndex(0, 0)


def test_world_to_grid_on_boundary_falls_into_upper_cell():
    # cells are half-open [k*res, (k+1)*res)
    g = make_grid()
    assert g.world_to_grid(1.50, 0.75) == GridIndex(2, 1)


def test_world_to_grid_interior_point():
    g = make_grid()
    assert g.world_to_grid(5.25, 5.25) == GridIndex(7, 7)


def test_world_to_grid_rejects_outside_extent():
    g = make_grid()
    with pytest.raises(OutOfBoundsError):
        g.world_to_grid(-0.01, 1.0)
    with pytest.raises(OutOfBoundsError):
        g.world_to_grid(10 * 0.75, 1.0)  # exact upper edge is outside


def test_round_trip_cell_centers():
    g = make_grid(7, 5, 0.4)
    for j in range(g.height):
        for i in range(g.width):
            idx = GridIndex(i, j)
            x, y = g.grid_to_world(idx)
            assert g.world_to_grid(x, y) == idx


def test_neighbors8_counts():
    g = make_grid(10, 10)
    assert len(g.neighbors8(GridIndex(5, 5))) == 8
    assert len(g.neighbors8(GridIndex(0, 0))) == 3
    assert len(g.neighbors8(GridIndex(0, 5))) == 5


def test_neighbors8_symmetry_random_grids():
    rng = np.random.default_rng(7)
    for _ in range(20):
        w = int(rng.integers(3, 9))
        h = int(rng.integers(3, 9))
        g = make_grid(w, h)
        for _ in range(10):
            a = GridIndex(int(rng.integers(0, w)), int(rng.integers(0, h)))
            for b, _act in g.neighbors8(a):
                back = [c for c, _ in g.neighbors8(b)]
                assert a in back


def test_neighbors8_action_labels():
    g = make_grid(3, 3)
    labels = dict((a, c) for c, a in g.neighbors8(GridIndex(1, 1)))
    assert labels[GlobalAction.E] == GridIndex(2, 1)
    assert labels[GlobalAction.EN] == GridIndex(2, 2)
    assert labels[GlobalAction.N] == GridIndex(1, 2)
    assert labels[GlobalAction.WS] == GridIndex(0, 0)


def test_local_window_full_grid():
    g = make_grid(10, 10)
    w = local_window(g, GridIndex(5, 5), 10)
    assert w.origin == GridIndex(0, 0)
    assert w.view.shape == (10, 10)


def test_local_window_clamps_at_corners():
    g = make_grid(10, 10)
    assert local_window(g, GridIndex(0, 0), 3).origin == GridIndex(0, 0)
    assert local_window(g, GridIndex(9, 9), 3).origin == GridIndex(7, 7)


def test_local_window_too_large():
    g = make_grid(10, 10)
    with pytest.raises(WindowTooLargeError):
        local_window(g, GridIndex(5, 5), 11)


def test_local_window_view_matches_grid():
    g = make_grid(6, 6)
    g.set_occupancy(GridIndex(4, 4), Occupancy.OBSTACLE)
    w = local_window(g, GridIndex(4, 4), 3)
    assert w.contains(GridIndex(4, 4))
    local = w.view[4 - w.origin.j, 4 - w.origin.i]
    assert local == Occupancy.OBSTACLE


MAP_TEXT = """\
4 3 0.75
.#..
....
..#.
"""


def test_parse_map_text_layout():
    g = parse_map_text(MAP_TEXT)
    assert (g.width, g.height, g.resolution) == (4, 3, 0.75)
    # top row of the file is j=2
    assert g.occupancy(GridIndex(1, 2)) == Occupancy.OBSTACLE
    assert g.occupancy(GridIndex(2, 0)) == Occupancy.OBSTACLE
    assert g.occupancy(GridIndex(0, 0)) == Occupancy.FREE


def test_parse_map_rejects_unknown_chars():
    with pytest.raises(MapFormatError):
        parse_map_text("2 1 1.0\n.x\n")


def test_parse_map_rejects_bad_row_length():
    with pytest.raises(MapFormatError):
        parse_map_text("3 2 1.0\n...\n..\n")


def test_loaded_map_never_contains_human():
    g = parse_map_text(MAP_TEXT)
    assert not (g.occupancy_array == Occupancy.HUMAN).any()


def test_map_round_trip():
    g = parse_map_text(MAP_TEXT)
    assert parse_map_text(dump_map_text(g)).occupancy_array.tolist() \
        == g.occupancy_array.tolist()


def test_human_overlay_is_a_copy():
    g = parse_map_text(MAP_TEXT)
    overlay = g.with_humans([GridIndex(0, 0)])
    assert overlay.occupancy(GridIndex(0, 0)) == Occupancy.HUMAN
    assert g.occupancy(GridIndex(0, 0)) == Occupancy.FREE
