"""Command line front end.

Subcommands: `plan` prints the static route for a scenario map, `episode` runs
one seeded episode (optionally writing a JSONL log), `batch` runs a seed sweep
and emits a report, `serve` starts the live websocket bridge.

Exit codes: 0 on success, 1 on an operational failure (planning or episode
error), 2 on bad usage or a bad config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import (BUILTIN_SCENARIOS, ConfigError, ScenarioConfig,
                     load_scenario)
from .grid import parse_map_text
from .mdp_planner import (InvalidGoalError, UnreachableError, extract_path,
                          smooth_path, value_iteration)
from .harness import emit_report, run_batch
from .simulator import run_episode, write_episode_log


def _add_scenario_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--scenario", default="corridor_gap",
                       choices=sorted(BUILTIN_SCENARIOS),
                       help="built-in scenario name (default: corridor_gap)")
    group.add_argument("--config", metavar="PATH",
                       help="scenario JSON file (overrides --scenario)")
    parser.add_argument("--budget-ms", type=float, default=None,
                        help="override planner time budget in ms")
    parser.add_argument("--k-scenarios", type=int, default=None,
                        help="override sampled scenario count")
    parser.add_argument("--k-particles", type=int, default=None,
                        help="override belief particle count")


def _load_config(args: argparse.Namespace) -> ScenarioConfig:
    if args.config is not None:
        cfg = load_scenario(args.config)
    else:
        cfg = BUILTIN_SCENARIOS[args.scenario]()
    overrides = {}
    if args.budget_ms is not None:
        overrides["time_budget_ms"] = args.budget_ms
    if args.k_scenarios is not None:
        overrides["k_scenarios"] = args.k_scenarios
    if args.k_particles is not None:
        overrides["k_particles"] = args.k_particles
    if overrides:
        cfg = dataclasses.replace(
            cfg, planner=dataclasses.replace(cfg.planner, **overrides))
        cfg.validate()
    return cfg


def _parse_seeds(args: argparse.Namespace, parser: argparse.ArgumentParser) -> list[int]:
    if args.seeds is not None:
        try:
            if ":" in args.seeds:
                lo, hi = args.seeds.split(":", 1)
                seeds = list(range(int(lo), int(hi)))
            else:
                seeds = [int(tok) for tok in args.seeds.split(",") if tok.strip()]
        except ValueError:
            parser.error(f"cannot parse --seeds {args.seeds!r}; "
                         "use '0,3,7' or a half-open range '0:25'")
        if not seeds:
            parser.error("--seeds is empty")
        return seeds
    return list(range(args.n))


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as f:
            f.write(text)


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    grid = parse_map_text(cfg.map_text)
    values, policy = value_iteration(grid, cfg.goal)
    path = extract_path(policy, cfg.start, cfg.goal)
    smooth = smooth_path(path, 0.25)
    payload = {
        "scenario": cfg.name,
        "start": [cfg.start.i, cfg.start.j], "goal": [cfg.goal.i, cfg.goal.j],
        "hops": path.hops,
        "path": [[w.i, w.j] for w in path.waypoints],
        "samples": [[round(float(x), 4), round(float(y), 4)]
                    for x, y in smooth.samples],
        "vi_iterations": values.iterations_used,
        "vi_residual": values.residual,
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def cmd_episode(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    result = run_episode(cfg, args.seed)
    if args.out is not None:
        write_episode_log(args.out, cfg, args.seed, result)
    sys.stdout.write(json.dumps(result.to_meta_dict()) + "\n")
    return 0


def cmd_batch(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    cfg = _load_config(args)
    seeds = _parse_seeds(args, parser)
    report = run_batch(cfg, seeds, jobs=args.jobs)
    _emit(emit_report(report, args.format), args.out)
    summary = report.summary_dict()
    summary["wall_ms"] = round(report.wall_ms, 1)
    print(json.dumps(summary), file=sys.stderr)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .live_bridge import run_server
    cfg = _load_config(args)
    run_server(cfg, seed=args.seed, host=args.host, port=args.port,
               ticks_per_second=args.tick_rate)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="awarenav",
        description="awareness-conditioned navigation: plan, simulate, serve")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="print the static route for a scenario")
    _add_scenario_args(p_plan)
    p_plan.add_argument("--out", help="write JSON here instead of stdout")

    p_ep = sub.add_parser("episode", help="run one seeded episode")
    _add_scenario_args(p_ep)
    p_ep.add_argument("--seed", type=int, default=0)
    p_ep.add_argument("--out", help="write a JSONL episode log here")

    p_batch = sub.add_parser("batch", help="run a seed sweep and emit a report")
    _add_scenario_args(p_batch)
    p_batch.add_argument("--seeds", default=None,
                         help="comma list '0,3,7' or half-open range '0:25'")
    p_batch.add_argument("--n", type=int, default=25,
                         help="use seeds 0..N-1 when --seeds is absent")
    p_batch.add_argument("--jobs", type=int, default=1,
                         help="worker processes (default 1)")
    p_batch.add_argument("--format", default="json",
                         choices=["json", "csv", "plotdata"])
    p_batch.add_argument("--out", help="write the report here instead of stdout")

    p_serve = sub.add_parser("serve", help="start the live websocket bridge")
    _add_scenario_args(p_serve)
    p_serve.add_argument("--seed", type=int, default=0)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8710)
    p_serve.add_argument("--tick-rate", type=float, default=1.0,
                         help="simulation ticks per wall second when running")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "plan":
            return cmd_plan(args)
        if args.command == "episode":
            return cmd_episode(args)
        if args.command == "batch":
            return cmd_batch(args, parser)
        if args.command == "serve":
            return cmd_serve(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (UnreachableError, InvalidGoalError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
