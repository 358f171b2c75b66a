"""Seeded batch evaluation.

Runs one episode per seed (optionally across worker processes), collects
per-episode metrics, and serializes reports. Serialized output never contains
wall-clock times: a report is a pure function of (scenario, seeds), identical
across reruns and worker counts; timing lives only on the in-memory objects.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .simulator import run_episode

WAIT_DISTANCE_BINS = [round(0.25 * i, 2) for i in range(21)]  # 0 .. 5 m
STEP_BINS = list(range(0, 65, 5))


@dataclass(frozen=True)
class EpisodeRow:
    seed: int
    outcome: str
    success: bool
    ticks: int
    steps_to_goal: int | None
    min_clearance_m: float | None
    discounted_return: float
    replans: int
    fallbacks: int
    mean_nodes_expanded: float
    wait_aware_sum: float
    wait_aware_count: int
    wait_unaware_sum: float
    wait_unaware_count: int
    wait_aware_distances: tuple[float, ...]
    wait_unaware_distances: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "outcome": self.outcome, "success": self.success,
            "ticks": self.ticks, "steps_to_goal": self.steps_to_goal,
            "min_clearance_m": self.min_clearance_m,
            "discounted_return": self.discounted_return,
            "replans": self.replans, "fallbacks": self.fallbacks,
            "mean_nodes_expanded": self.mean_nodes_expanded,
            "wait_aware_sum": self.wait_aware_sum,
            "wait_aware_count": self.wait_aware_count,
            "wait_unaware_sum": self.wait_unaware_sum,
            "wait_unaware_count": self.wait_unaware_count,
            "wait_aware_distances": list(self.wait_aware_distances),
            "wait_unaware_distances": list(self.wait_unaware_distances),
        }


@dataclass
class BatchReport:
    scenario: str
    seeds: tuple[int, ...]
    episodes: list[EpisodeRow]
    wall_ms: float = field(default=0.0, compare=False)

    @property
    def success_rate(self) -> float:
        return sum(e.success for e in self.episodes) / len(self.episodes)

    @property
    def mean_steps_to_goal(self) -> float | None:
        steps = [e.steps_to_goal for e in self.episodes if e.success]
        return sum(steps) / len(steps) if steps else None

    @property
    def mean_wait_distance_aware(self) -> float | None:
        total = sum(e.wait_aware_count for e in self.episodes)
        if total == 0:
            return None
        return sum(e.wait_aware_sum for e in self.episodes) / total

    @property
    def mean_wait_distance_unaware(self) -> float | None:
        total = sum(e.wait_unaware_count for e in self.episodes)
        if total == 0:
            return None
        return sum(e.wait_unaware_sum for e in self.episodes) / total

    def summary_dict(self) -> dict:
        return {
            "scenario": self.scenario, "episodes": len(self.episodes),
            "success_rate": self.success_rate,
            "mean_steps_to_goal": self.mean_steps_to_goal,
            "mean_wait_distance_aware": self.mean_wait_distance_aware,
            "mean_wait_distance_unaware": self.mean_wait_distance_unaware,
            "timeouts": sum(e.outcome == "timeout" for e in self.episodes),
            "collisions": sum(e.outcome == "collision" for e in self.episodes),
            "total_replans": sum(e.replans for e in self.episodes),
            "total_fallbacks": sum(e.fallbacks for e in self.episodes),
        }


def _episode_row(config: ScenarioConfig, seed: int) -> EpisodeRow:
    result = run_episode(config, seed, keep_records=False)
    aware = tuple(d for _, d, a in result.wait_events if a)
    unaware = tuple(d for _, d, a in result.wait_events if not a)
    return EpisodeRow(
        seed=seed, outcome=result.outcome, success=result.success,
        ticks=result.ticks, steps_to_goal=result.steps_to_goal,
        min_clearance_m=result.min_clearance_m,
        discounted_return=result.discounted_return, replans=result.replans,
        fallbacks=result.fallbacks,
        mean_nodes_expanded=result.mean_nodes_expanded,
        wait_aware_sum=float(sum(aware)), wait_aware_count=len(aware),
        wait_unaware_sum=float(sum(unaware)), wait_unaware_count=len(unaware),
        wait_aware_distances=aware, wait_unaware_distances=unaware)


def _worker(args: tuple[ScenarioConfig, int]) -> EpisodeRow:
    return _episode_row(*args)


def run_batch(config: ScenarioConfig, seeds: list[int] | tuple[int, ...],
              jobs: int = 1) -> BatchReport:
    """One episode per seed; `jobs` > 1 fans out over processes. Row order
    follows the seed list regardless of completion order."""
    if not seeds:
        raise ValueError("seeds must be non-empty")
    started = time.perf_counter()
    if jobs <= 1:
        rows = [_episode_row(config, s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_worker, [(config, s) for s in seeds]))
    return BatchReport(scenario=config.name, seeds=tuple(seeds), episodes=rows,
                       wall_ms=(time.perf_counter() - started) * 1000.0)


# --- serialization -------------------------------------------------------------


def report_to_json(report: BatchReport) -> str:
    payload = {
        "scenario": report.scenario, "seeds": list(report.seeds),
        "summary": report.summary_dict(),
        "episodes": [e.to_dict() for e in report.episodes],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


_CSV_FIELDS = ["seed", "outcome", "success", "ticks", "steps_to_goal",
               "min_clearance_m", "discounted_return", "replans", "fallbacks",
               "mean_nodes_expanded", "wait_aware_sum", "wait_aware_count",
               "wait_unaware_sum", "wait_unaware_count"]


def report_to_csv(report: BatchReport) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for episode in report.episodes:
        row = episode.to_dict()
        writer.writerow({k: row[k] for k in _CSV_FIELDS})
    return buf.getvalue()


def _histogram(values: list[float], bins: list[float]) -> list[int]:
    counts, _ = np.histogram(values, bins=np.asarray(bins, dtype=float))
    return [int(c) for c in counts]


def report_to_plotdata(report: BatchReport) -> str:
    """Fixed-bin histograms ready for plotting; bins never depend on the data,
    so identical batches serialize identically."""
    aware = [d for e in report.episodes for d in e.wait_aware_distances]
    unaware = [d for e in report.episodes for d in e.wait_unaware_distances]
    steps = [float(e.steps_to_goal) for e in report.episodes if e.success]
    payload = {
        "scenario": report.scenario,
        "wait_distance_bins_m": WAIT_DISTANCE_BINS,
        "wait_distance_aware": _histogram(aware, WAIT_DISTANCE_BINS),
        "wait_distance_unaware": _histogram(unaware, WAIT_DISTANCE_BINS),
        "step_bins": [float(b) for b in STEP_BINS],
        "steps_to_goal": _histogram(steps, [float(b) for b in STEP_BINS]),
        "summary": report.summary_dict(),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


_EMITTERS = {"json": report_to_json, "csv": report_to_csv,
             "plotdata": report_to_plotdata}


def emit_report(report: BatchReport, fmt: str = "json",
                path: str | Path | None = None) -> str:
    try:
        text = _EMITTERS[fmt](report)
    except KeyError:
        raise ValueError(f"unknown report format {fmt!r}; "
                         f"expected one of {sorted(_EMITTERS)}") from None
    if path is not None:
        Path(path).write_text(text)
    return text
