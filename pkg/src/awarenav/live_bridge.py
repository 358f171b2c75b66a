"""Websocket bridge exposing one running episode to observer consoles.

Protocol (version field "v" is 1 in every frame, each frame one JSON text
message):

Server frames:
  hello        sent on connect and after a reset: episode id, scenario name,
               seed, map text, start/goal, the current planned path, pacing.
  state        broadcast after every tick: tick, robot (cell, path_index,
               last_action, last_reward), per-pedestrian truth (cell, g_true,
               plus latched/believed_aware joined from the nearest track),
               raw tracks, belief_summary (per-ped cell histograms), current
               path, root bounds from the last solve, events, outcome.
  metrics      broadcast after each state: running aggregates (discounted
               return, replans, fallbacks, wait events, min clearance).
  episode_end  broadcast once when the episode finishes (no wall-clock
               fields, so recorded sessions replay byte-identically).
  ack          reply to a command: command_id plus applied/rejected + reason.
  error        reply to a frame the server could not parse; the connection
               stays open.

Client frames: {"v": 1, "type": <command>, "command_id": id, ...} where
command is one of pause, resume, step, set_speed(ticks_per_s),
reset(scenario?), set_ped_target(id, cell), toggle_gaze(id, on). A frame
whose "v" is not 1 closes the connection with a protocol close reason.

Concurrency: a single loop task owns the simulator. Connections only parse
frames and enqueue them; the loop drains the queue once per tick boundary, so
no command ever lands mid-tick, and the state message that follows an
"applied" ack already reflects the command.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import math
import time
from contextlib import asynccontextmanager

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .config import BUILTIN_SCENARIOS, ScenarioConfig
from .grid import GridIndex
from .simulator import EpisodeRunner, StepRecord

PROTOCOL_VERSION = 1
CLOSE_BAD_VERSION = 4001
_MIN_TPS, _MAX_TPS = 0.01, 1000.0


def _dumps(payload: dict) -> str:
    return json.dumps(payload, separators=(",", ":"))


class LiveBridge:
    """Owns the episode and the single simulation loop task."""

    def __init__(self, config: ScenarioConfig, seed: int,
                 ticks_per_second: float = 1.0, start_paused: bool = False):
        self.config = config
        self.seed = seed
        self.ticks_per_second = float(ticks_per_second)
        self.paused = start_paused
        self.runner = EpisodeRunner(config, seed)
        self.episode_n = 0
        self.clients: dict[int, asyncio.Queue] = {}
        self.last_state: dict | None = None
        self._ids = itertools.count(1)
        self._inbox: asyncio.Queue | None = None
        self._task: asyncio.Task | None = None
        self._next_due = 0.0
        self._end_sent = False

    # --- lifecycle -----------------------------------------------------------------

    def start(self) -> None:
        self._inbox = asyncio.Queue()
        self._next_due = time.monotonic() + 1.0 / self.ticks_per_second
        self._task = asyncio.create_task(self._run())

    async def stop(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass

    @property
    def episode_id(self) -> str:
        return f"ep-{self.episode_n}"

    # --- frames --------------------------------------------------------------------

    def hello_message(self) -> dict:
        return {
            "v": PROTOCOL_VERSION, "type": "hello", "episode": self.episode_id,
            "scenario": self.config.name, "seed": self.seed,
            "map_text": self.config.map_text,
            "start": [self.config.start.i, self.config.start.j],
            "goal": [self.config.goal.i, self.config.goal.j],
            "path": [[w.i, w.j] for w in self.runner.path.waypoints],
            "tick_seconds": self.config.tick_seconds,
            "max_ticks": self.config.max_ticks,
            "paused": self.paused,
            "ticks_per_second": self.ticks_per_second,
        }

    def _joined_peds(self, record: StepRecord) -> list[dict]:
        # latched/believed-aware live on tracks; join each true pedestrian to
        # the nearest track within the association gate so the console gets
        # one row per pedestrian
        res = self.runner.grid.resolution
        gate = self.config.association_gate_m
        out = []
        for ped in record.peds:
            px = (ped["cell"][0] + 0.5) * res
            py = (ped["cell"][1] + 0.5) * res
            best, best_d = None, gate
            for tr in record.tracks:
                d = math.hypot(tr["x"] - px, tr["y"] - py)
                if d <= best_d:
                    best, best_d = tr, d
            out.append({
                "id": ped["id"], "cell": ped["cell"], "active": ped["active"],
                "g_true": ped["gazing"],
                "latched": bool(best["latched"]) if best else False,
                "believed_aware": best["believed_aware"] if best else None,
                "track_id": best["id"] if best else None,
            })
        return out

    def _state_message(self, record: StepRecord) -> dict:
        return {
            "v": PROTOCOL_VERSION, "type": "state", "episode": self.episode_id,
            "tick": record.tick,
            "robot": {
                "cell": [record.robot_cell.i, record.robot_cell.j],
                "path_index": record.robot_index,
                "last_action": record.action,
                "last_reward": record.reward,
            },
            "peds": self._joined_peds(record),
            "tracks": record.tracks,
            "belief_summary": record.belief,
            "path": [[w.i, w.j] for w in self.runner.path.waypoints],
            "bounds": {"lower": record.solver["lower"],
                       "upper": record.solver["upper"]},
            "events": record.events,
            "outcome": record.outcome,
        }

    def _metrics_message(self, record: StepRecord) -> dict:
        r = self.runner
        clearance = None if math.isinf(r._min_clearance) else r._min_clearance
        return {
            "v": PROTOCOL_VERSION, "type": "metrics",
            "episode": self.episode_id, "tick": record.tick,
            "discounted_return": r._discounted_return,
            "replans": r._replans, "fallbacks": r._fallbacks,
            "wait_events": len(r._wait_events),
            "min_clearance_m": clearance,
        }

    def _end_message(self) -> dict:
        meta = self.runner._result(wall_ms=0.0).to_meta_dict()
        return {"v": PROTOCOL_VERSION, "type": "episode_end",
                "episode": self.episode_id, **meta}

    # --- loop ----------------------------------------------------------------------

    def _broadcast(self, frame: dict) -> None:
        text = _dumps(frame)
        for queue in self.clients.values():
            queue.put_nowait(text)

    def _send(self, client_id: int, frame: dict) -> None:
        queue = self.clients.get(client_id)
        if queue is not None:
            queue.put_nowait(_dumps(frame))

    def _tick_once(self) -> None:
        record = self.runner.tick()
        state = self._state_message(record)
        self.last_state = state
        self._broadcast(state)
        self._broadcast(self._metrics_message(record))
        if self.runner.done and not self._end_sent:
            self._broadcast(self._end_message())
            self._end_sent = True

    async def _run(self) -> None:
        while True:
            batch = []
            if self.paused or self.runner.done:
                batch.append(await self._inbox.get())
            else:
                remaining = self._next_due - time.monotonic()
                if remaining > 0:
                    try:
                        batch.append(await asyncio.wait_for(
                            self._inbox.get(), remaining))
                    except asyncio.TimeoutError:
                        pass
            while not self._inbox.empty():
                batch.append(self._inbox.get_nowait())
            # tick boundary: everything queued applies now, before any tick
            steps = 0
            for client_id, msg in batch:
                steps += self._apply(client_id, msg)
            for _ in range(steps):
                if not self.runner.done:
                    self._tick_once()
            if not self.paused and not self.runner.done \
                    and time.monotonic() >= self._next_due:
                self._tick_once()
                self._next_due = time.monotonic() + 1.0 / self.ticks_per_second

    # --- command application -------------------------------------------------------

    def _occupied(self, cell: GridIndex, ped_id: int) -> bool:
        if cell == self.runner._robot_cell():
            return True
        return any(p.active and p.cell == cell and p.spec.ped_id != ped_id
                   for p in self.runner.peds)

    def _apply(self, client_id: int, msg: dict) -> int:
        """Apply one queued command; returns the number of step requests."""
        command_id = msg.get("command_id")
        kind = msg.get("type")

        def ack(status: str, reason: str | None = None) -> None:
            frame = {"v": PROTOCOL_VERSION, "type": "ack",
                     "command_id": command_id, "status": status}
            if reason is not None:
                frame["reason"] = reason
            self._send(client_id, frame)

        if command_id is None or not isinstance(kind, str):
            self._send(client_id, {
                "v": PROTOCOL_VERSION, "type": "error",
                "detail": "commands need a string 'type' and a 'command_id'"})
            return 0

        if kind == "pause":
            self.paused = True
            ack("applied")
        elif kind == "resume":
            if self.runner.done:
                ack("rejected", "episode over; send reset first")
            else:
                self.paused = False
                self._next_due = time.monotonic()
                ack("applied")
        elif kind == "step":
            if self.runner.done:
                ack("rejected", "episode over; send reset first")
            else:
                self.paused = True  # stepping while running pauses first
                ack("applied")
                return 1
        elif kind == "set_speed":
            tps = msg.get("ticks_per_s")
            if not isinstance(tps, (int, float)) or not \
                    (_MIN_TPS <= float(tps) <= _MAX_TPS):
                ack("rejected",
                    f"ticks_per_s must be a number in [{_MIN_TPS}, {_MAX_TPS}]")
            else:
                self.ticks_per_second = float(tps)
                self._next_due = time.monotonic() + 1.0 / self.ticks_per_second
                ack("applied")
        elif kind == "reset":
            name = msg.get("scenario")
            if name is None or name == self.config.name:
                cfg = self.config
            elif isinstance(name, str) and name in BUILTIN_SCENARIOS:
                cfg = BUILTIN_SCENARIOS[name]()
            else:
                ack("rejected", f"unknown scenario {name!r}")
                return 0
            self.config = cfg
            self.runner = EpisodeRunner(cfg, self.seed)
            self.episode_n += 1
            self.last_state = None
            self._end_sent = False
            ack("applied")
            self._broadcast(self.hello_message())
        elif kind == "set_ped_target":
            ped_id, cell = msg.get("id"), msg.get("cell")
            if not isinstance(ped_id, int) or not (
                    isinstance(cell, list) and len(cell) == 2
                    and all(isinstance(c, int) for c in cell)):
                ack("rejected", "set_ped_target needs integer 'id' and 'cell' [i, j]")
                return 0
            target = GridIndex(cell[0], cell[1])
            if self.runner.grid.in_bounds(target) and self._occupied(target, ped_id):
                ack("rejected", f"cell {cell} is occupied")
            elif self.runner.set_ped_target(ped_id, target):
                ack("applied")
            else:
                ack("rejected", "unknown pedestrian id or cell not walkable")
        elif kind == "toggle_gaze":
            ped_id, on = msg.get("id"), msg.get("on")
            if not isinstance(ped_id, int) or not isinstance(on, bool):
                ack("rejected", "toggle_gaze needs integer 'id' and boolean 'on'")
            elif self.runner.set_gaze_override(ped_id, on):
                ack("applied")
            else:
                ack("rejected", "unknown pedestrian id")
        else:
            ack("rejected", f"unknown command type {kind!r}")
        return 0

    # --- connection glue -----------------------------------------------------------

    def register(self) -> tuple[int, asyncio.Queue]:
        client_id = next(self._ids)
        queue: asyncio.Queue = asyncio.Queue()
        self.clients[client_id] = queue
        queue.put_nowait(_dumps(self.hello_message()))
        if self.last_state is not None:
            queue.put_nowait(_dumps(self.last_state))
        return client_id, queue

    def unregister(self, client_id: int) -> None:
        self.clients.pop(client_id, None)

    def submit(self, client_id: int, msg: dict) -> None:
        self._inbox.put_nowait((client_id, msg))


def build_app(config: ScenarioConfig, seed: int, ticks_per_second: float = 1.0,
              start_paused: bool = False) -> FastAPI:
    bridge = LiveBridge(config, seed, ticks_per_second=ticks_per_second,
                        start_paused=start_paused)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        bridge.start()
        yield
        await bridge.stop()

    app = FastAPI(lifespan=lifespan)
    app.state.bridge = bridge

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        client_id, queue = bridge.register()

        async def pump() -> None:
            while True:
                await ws.send_text(await queue.get())

        writer = asyncio.create_task(pump())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    bridge._send(client_id, {
                        "v": PROTOCOL_VERSION, "type": "error",
                        "detail": "frame is not valid JSON"})
                    continue
                if not isinstance(msg, dict):
                    bridge._send(client_id, {
                        "v": PROTOCOL_VERSION, "type": "error",
                        "detail": "frame must be a JSON object"})
                    continue
                if msg.get("v") != PROTOCOL_VERSION:
                    await ws.close(code=CLOSE_BAD_VERSION,
                                   reason="unsupported protocol version")
                    break
                bridge.submit(client_id, msg)
        except WebSocketDisconnect:
            pass
        finally:
            writer.cancel()
            bridge.unregister(client_id)

    return app


def run_server(config: ScenarioConfig, seed: int, host: str = "127.0.0.1",
               port: int = 8710, ticks_per_second: float = 1.0,
               start_paused: bool = False) -> None:
    import uvicorn

    app = build_app(config, seed, ticks_per_second=ticks_per_second,
                    start_paused=start_paused)
    uvicorn.run(app, host=host, port=port, log_level="warning")
