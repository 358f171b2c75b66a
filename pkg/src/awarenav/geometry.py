"""Shared sensing geometry: forward sector visibility checks."""

from __future__ import annotations

import numpy as np


def sector_visible(robot_xy, heading_xy, target_xy, fov_deg: float, range_m: float) -> bool:
    """True if target lies within `range_m` and inside the forward `fov_deg` sector.

    A zero separation (target on the robot cell) counts as visible; the angular
    test is inclusive at the sector boundary.
    """
    v = np.asarray(target_xy, dtype=float) - np.asarray(robot_xy, dtype=float)
    d = float(np.hypot(v[0], v[1]))
    if d > range_m:
        return False
    if d == 0.0:
        return True
    h = np.asarray(heading_xy, dtype=float)
    hn = float(np.hypot(h[0], h[1]))
    if hn == 0.0:
        return True
    cos_ang = float(np.dot(h, v)) / (hn * d)
    return cos_ang >= np.cos(np.radians(fov_deg / 2.0))


def sector_visible_many(robot_xy, heading_xy, xs: np.ndarray, ys: np.ndarray,
                        fov_deg: float, range_m: float) -> np.ndarray:
    """Vectorized sector_visible over target coordinate arrays."""
    dx = np.asarray(xs, dtype=float) - robot_xy[0]
    dy = np.asarray(ys, dtype=float) - robot_xy[1]
    d = np.hypot(dx, dy)
    h = np.asarray(heading_xy, dtype=float)
    hn = float(np.hypot(h[0], h[1]))
    in_range = d <= range_m
    if hn == 0.0:
        return in_range
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_ang = (h[0] * dx + h[1] * dy) / (hn * d)
    in_fov = cos_ang >= np.cos(np.radians(fov_deg / 2.0))
    return in_range & (in_fov | (d == 0.0))
