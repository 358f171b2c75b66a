"""Particle-filter belief over pedestrian cells and hidden awareness.

Particles share the robot's (known) path index; only pedestrian state is
uncertain. Updates are sequential importance resampling with a systematic
resample after every step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridIndex
from .pomdp_model import (AWARE, UNAWARE, LocalAction, LocalObservation,
                          NavigationPomdp, PedState, PomdpState, WindowRect)
from .tracker import Track

DEFAULT_PARTICLES = 5000
DEFAULT_AWARE_PRIOR = 0.1


class InvalidParticleCountError(ValueError):
    """Particle count must be positive."""


class DegenerateBeliefError(RuntimeError):
    """Every particle weight collapsed to zero; reinitialize from the tracker."""


@dataclass
class ParticleBelief:
    robot_path_index: int
    step: int
    cells: np.ndarray    # (K, N) window cell ids
    aware: np.ndarray    # (K, N) int8, +1 / -1
    weights: np.ndarray  # (K,) normalized
    track_ids: tuple[int, ...]
    window: WindowRect

    @property
    def k_particles(self) -> int:
        return self.cells.shape[0]

    @property
    def n_peds(self) -> int:
        return self.cells.shape[1]

    def _id_to_cell(self, cid: int) -> GridIndex:
        return GridIndex(self.window.origin_i + cid % self.window.width,
                         self.window.origin_j + cid // self.window.width)

    def particle(self, k: int) -> PomdpState:
        peds = tuple(PedState(self._id_to_cell(int(c)), int(g))
                     for c, g in zip(self.cells[k], self.aware[k]))
        return PomdpState(self.robot_path_index, peds, self.step)

    def aware_fraction(self, ped: int) -> float:
        return float(self.weights[self.aware[:, ped] == AWARE].sum())

    def cell_histogram(self, ped: int) -> list[tuple[int, int, float]]:
        """Weighted cell occupancy [(i, j, mass), ...] sorted by cell id."""
        ids, inv = np.unique(self.cells[:, ped], return_inverse=True)
        mass = np.zeros(len(ids))
        np.add.at(mass, inv, self.weights)
        out = []
        for cid, w in zip(ids, mass):
            cell = self._id_to_cell(int(cid))
            out.append((cell.i, cell.j, float(w)))
        return out

    def summary(self) -> dict:
        """JSON-ready snapshot: per-ped histograms and awareness mass."""
        return {
            "peds": [
                {"track_id": tid,
                 "aware_fraction": self.aware_fraction(n),
                 "cells": [[i, j, w] for i, j, w in self.cell_histogram(n)]}
                for n, tid in enumerate(self.track_ids)
            ]
        }


def effective_sample_size(belief: ParticleBelief) -> float:
    return float(1.0 / np.square(belief.weights).sum())


def systematic_resample(weights: np.ndarray, u: float) -> np.ndarray:
    """Systematic resampling offsets by a single uniform draw u in [0, 1)."""
    k = len(weights)
    positions = (u + np.arange(k)) / k
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard float drift at the top edge
    return np.searchsorted(cumulative, positions, side="left").clip(0, k - 1)


def init_belief(tracks: list[Track], robot_path_index: int, model: NavigationPomdp,
                k: int = DEFAULT_PARTICLES, rng: np.random.Generator | None = None,
                p_aware_prior: float = DEFAULT_AWARE_PRIOR, step: int = 0) -> ParticleBelief:
    """Gaussian position samples around each track, discretized into the window.

    Latched tracks pin awareness to +1 in every particle; the rest draw aware
    with probability `p_aware_prior`.
    """
    if k <= 0:
        raise InvalidParticleCountError(f"particle count must be positive, got {k}")
    rng = rng or np.random.default_rng()
    window = model.window
    res = model.grid.resolution
    n = len(tracks)
    cells = np.zeros((k, n), dtype=np.int64)
    aware = np.zeros((k, n), dtype=np.int8)
    for col, track in enumerate(tracks):
        mean = track.state.mean[:2]
        cov = track.state.cov[:2, :2]
        xy = rng.multivariate_normal(mean, cov, size=k, method="svd")
        ci = np.clip(np.floor(xy[:, 0] / res).astype(np.int64),
                     window.origin_i, window.origin_i + window.width - 1)
        cj = np.clip(np.floor(xy[:, 1] / res).astype(np.int64),
                     window.origin_j, window.origin_j + window.height - 1)
        cells[:, col] = (cj - window.origin_j) * window.width + (ci - window.origin_i)
        if track.gaze.latched:
            aware[:, col] = AWARE
        else:
            aware[:, col] = np.where(rng.random(k) < p_aware_prior, AWARE, UNAWARE)
    weights = np.full(k, 1.0 / k)
    return ParticleBelief(robot_path_index, step, cells, aware, weights,
                          tuple(t.id for t in tracks), window)


def update(belief: ParticleBelief, action: LocalAction, o: LocalObservation,
           model: NavigationPomdp, rng: np.random.Generator) -> ParticleBelief:
    """SIR update: propagate through the model, weight by the observation
    likelihood, then systematic-resample back to uniform weights."""
    k, n = belief.cells.shape
    next_index = model.advance_index(belief.robot_path_index, action)
    if n:
        u = rng.random((2, k, n))
    else:
        u = np.zeros((2, k, 0))
    ex_a = np.array([model.robot_cell_ids[next_index]])
    ex_b = np.array([model.robot_cell_ids[min(next_index + 1, model.last_index)]])
    cells = model.step_peds(belief.cells, belief.aware, u[0], u[1], ex_a, ex_b)
    weights = belief.weights * model.likelihood_batch(cells, belief.aware, next_index, o)
    total = weights.sum()
    if total <= 0.0:
        raise DegenerateBeliefError("all particle weights are zero")
    weights = weights / total
    picks = systematic_resample(weights, float(rng.random()))
    return ParticleBelief(next_index, belief.step + 1, cells[picks],
                          belief.aware[picks], np.full(k, 1.0 / k),
                          belief.track_ids, belief.window)


def rebind_window(belief: ParticleBelief, window: WindowRect) -> ParticleBelief:
    """Re-express particle cell ids in another window, clamping strays onto its
    border. Used when the planning window follows the robot."""
    if window == belief.window:
        return belief
    old = belief.window
    gi = old.origin_i + belief.cells % old.width
    gj = old.origin_j + belief.cells // old.width
    gi = np.clip(gi, window.origin_i, window.origin_i + window.width - 1)
    gj = np.clip(gj, window.origin_j, window.origin_j + window.height - 1)
    cells = (gj - window.origin_j) * window.width + (gi - window.origin_i)
    return ParticleBelief(belief.robot_path_index, belief.step, cells,
                          belief.aware.copy(), belief.weights.copy(),
                          belief.track_ids, window)
