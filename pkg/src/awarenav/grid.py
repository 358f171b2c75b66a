"""Occupancy grid world: cells, coordinate transforms, local windows, map I/O."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class OutOfBoundsError(ValueError):
    """World position or cell index falls outside the grid."""


class WindowTooLargeError(ValueError):
    """Requested local window does not fit inside the grid."""


class MapFormatError(ValueError):
    """Static map text is malformed."""


class Occupancy(enum.IntEnum):
    FREE = 0
    OBSTACLE = 1
    HUMAN = 2


class GlobalAction(enum.IntEnum):
    """8-connected moves, in fixed tie-break order."""

    E = 0
    EN = 1
    N = 2
    NW = 3
    W = 4
    WS = 5
    S = 6
    SE = 7


# (di, dj) per action, indexed by GlobalAction value.
ACTION_OFFSETS = (
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
)


@dataclass(frozen=True, order=True)
class GridIndex:
    """Cell index: i is the column (x), j the row (y)."""

    i: int
    j: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.i, self.j)


class OccupancyGrid:
    """Dense row-major occupancy grid with square cells of `resolution` meters."""

    def __init__(self, width: int, height: int, resolution: float,
                 cells: np.ndarray | None = None):
        if width <= 0 or height <= 0:
            raise ValueError("grid dimensions must be positive")
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.width = int(width)
        self.height = int(height)
        self.resolution = float(resolution)
        if cells is None:
            self._occ = np.zeros((self.height, self.width), dtype=np.uint8)
        else:
            occ = np.asarray(cells, dtype=np.uint8).reshape(self.height, self.width)
            if not np.isin(occ, (0, 1, 2)).all():
                raise ValueError("cells must hold Occupancy values")
            self._occ = occ.copy()

    @property
    def cells(self) -> np.ndarray:
        """Row-major flat view (index = j * width + i)."""
        return self._occ.reshape(-1)

    @property
    def occupancy_array(self) -> np.ndarray:
        """(height, width) array; occupancy_array[j, i]."""
        return self._occ

    def in_bounds(self, idx: GridIndex) -> bool:
        return 0 <= idx.i < self.width and 0 <= idx.j < self.height

    def occupancy(self, idx: GridIndex) -> Occupancy:
        if not self.in_bounds(idx):
            raise OutOfBoundsError(f"cell {idx.as_tuple()} outside {self.width}x{self.height} grid")
        return Occupancy(self._occ[idx.j, idx.i])

    def is_free(self, idx: GridIndex) -> bool:
        return self.in_bounds(idx) and self._occ[idx.j, idx.i] == Occupancy.FREE

    def set_occupancy(self, idx: GridIndex, occ: Occupancy) -> None:
        if not self.in_bounds(idx):
            raise OutOfBoundsError(f"cell {idx.as_tuple()} outside {self.width}x{self.height} grid")
        self._occ[idx.j, idx.i] = int(occ)

    def free_mask(self) -> np.ndarray:
        return self._occ == Occupancy.FREE

    def free_cells(self) -> list[GridIndex]:
        js, is_ = np.nonzero(self.free_mask())
        return [GridIndex(int(i), int(j)) for i, j in zip(is_, js)]

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.width, self.height, self.resolution, self._occ)

    def with_humans(self, cells: list[GridIndex]) -> "OccupancyGrid":
        """Copy with the given cells overlaid as Human; the original is untouched."""
        out = self.copy()
        for c in cells:
            if out.in_bounds(c) and out._occ[c.j, c.i] == Occupancy.FREE:
                out._occ[c.j, c.i] = Occupancy.HUMAN
        return out

    # --- coordinate transforms -------------------------------------------------

    def world_to_grid(self, x: float, y: float) -> GridIndex:
        """Map a world position to its cell; cells are half-open [k*res, (k+1)*res)."""
        if not (0.0 <= x < self.width * self.resolution
                and 0.0 <= y < self.height * self.resolution):
            raise OutOfBoundsError(f"position ({x}, {y}) outside grid extent")
        return GridIndex(int(x // self.resolution), int(y // self.resolution))

    def grid_to_world(self, idx: GridIndex) -> tuple[float, float]:
        """Cell-center world coordinates."""
        if not self.in_bounds(idx):
            raise OutOfBoundsError(f"cell {idx.as_tuple()} outside {self.width}x{self.height} grid")
        return ((idx.i + 0.5) * self.resolution, (idx.j + 0.5) * self.resolution)

    def neighbors8(self, idx: GridIndex) -> list[tuple[GridIndex, GlobalAction]]:
        """In-bounds 8-neighborhood, labeled with the action that reaches each cell."""
        if not self.in_bounds(idx):
            raise OutOfBoundsError(f"cell {idx.as_tuple()} outside {self.width}x{self.height} grid")
        out = []
        for a in GlobalAction:
            di, dj = ACTION_OFFSETS[a]
            nxt = GridIndex(idx.i + di, idx.j + dj)
            if self.in_bounds(nxt):
                out.append((nxt, a))
        return out


def grid_hops(grid: OccupancyGrid, start: GridIndex, goal: GridIndex) -> int | None:
    """8-connected hop count between two free cells, or None when unreachable."""
    if not (grid.is_free(start) and grid.is_free(goal)):
        return None
    if start == goal:
        return 0
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt, _ in grid.neighbors8(cur):
            if nxt in dist or not grid.is_free(nxt):
                continue
            dist[nxt] = dist[cur] + 1
            if nxt == goal:
                return dist[nxt]
            queue.append(nxt)
    return None


@dataclass(frozen=True)
class LocalWindow:
    """Square sub-grid view anchored at `origin` (lower-left), clamped to fit."""

    origin: GridIndex
    size: int
    view: np.ndarray

    def contains(self, idx: GridIndex) -> bool:
        return (self.origin.i <= idx.i < self.origin.i + self.size
                and self.origin.j <= idx.j < self.origin.j + self.size)


def local_window(grid: OccupancyGrid, center: GridIndex, size: int = 10) -> LocalWindow:
    """Extract a size x size window around `center`, shifted inward near borders."""
    if size < 3:
        raise ValueError("window size must be at least 3")
    if size > grid.width or size > grid.height:
        raise WindowTooLargeError(
            f"window size {size} exceeds grid {grid.width}x{grid.height}")
    oi = min(max(center.i - size // 2, 0), grid.width - size)
    oj = min(max(center.j - size // 2, 0), grid.height - size)
    view = grid.occupancy_array[oj:oj + size, oi:oi + size]
    return LocalWindow(GridIndex(oi, oj), size, view)


# --- static map text format --------------------------------------------------
#
# First line: "width height resolution". Then `height` rows of '.'/'#', the top
# row of the file being row j = height-1 (the file reads like the world, +y up).

_CHAR_TO_OCC = {".": Occupancy.FREE, "#": Occupancy.OBSTACLE}


def parse_map_text(text: str) -> OccupancyGrid:
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    if not lines:
        raise MapFormatError("empty map text")
    header = lines[0].split()
    if len(header) != 3:
        raise MapFormatError(f"header must be 'width height resolution', got {lines[0]!r}")
    try:
        width, height = int(header[0]), int(header[1])
        resolution = float(header[2])
    except ValueError as exc:
        raise MapFormatError(f"bad header values: {lines[0]!r}") from exc
    if len(lines) - 1 != height:
        raise MapFormatError(f"expected {height} rows, got {len(lines) - 1}")
    grid = OccupancyGrid(width, height, resolution)
    for row, line in enumerate(lines[1:]):
        if len(line) != width:
            raise MapFormatError(f"row {row} has {len(line)} cells, expected {width}")
        j = height - 1 - row
        for i, ch in enumerate(line):
            if ch not in _CHAR_TO_OCC:
                raise MapFormatError(f"unknown map character {ch!r} at row {row}, col {i}")
            grid._occ[j, i] = int(_CHAR_TO_OCC[ch])
    return grid


def load_map(path: str | Path) -> OccupancyGrid:
    return parse_map_text(Path(path).read_text())


def dump_map_text(grid: OccupancyGrid) -> str:
    if (grid.occupancy_array == Occupancy.HUMAN).any():
        raise MapFormatError("static map text cannot carry Human cells")
    rows = []
    for j in range(grid.height - 1, -1, -1):
        rows.append("".join("." if grid.occupancy_array[j, i] == Occupancy.FREE else "#"
                            for i in range(grid.width)))
    header = f"{grid.width} {grid.height} {grid.resolution:g}"
    return "\n".join([header] + rows) + "\n"
