"""Awareness-conditioned local navigation: gridworld planning, pedestrian
tracking with gaze latching, particle-filter belief over pedestrian awareness,
an anytime determinized-tree solver, a closed-loop simulator, batch
evaluation, and a live websocket bridge."""

from .config import (BUILTIN_SCENARIOS, ConfigError, PedestrianSpec,
                     PlannerSpec, ScenarioConfig, SensorSpec,
                     corridor_gap_scenario, corridor_pass_scenario,
                     load_scenario, save_scenario)
from .grid import GridIndex, OccupancyGrid, load_map, parse_map_text
from .harness import BatchReport, emit_report, run_batch
from .simulator import (EpisodeResult, EpisodeRunner, run_episode,
                        read_episode_log, write_episode_log)

__all__ = [
    "BUILTIN_SCENARIOS", "BatchReport", "ConfigError", "EpisodeResult",
    "EpisodeRunner", "GridIndex", "OccupancyGrid", "PedestrianSpec",
    "PlannerSpec", "ScenarioConfig", "SensorSpec", "corridor_gap_scenario",
    "corridor_pass_scenario", "emit_report", "load_map", "load_scenario",
    "parse_map_text", "read_episode_log", "run_batch", "run_episode",
    "save_scenario", "write_episode_log",
]
