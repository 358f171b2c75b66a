/**
 * Wire types and validation for the live bridge protocol (v1).
 *
 * Every frame is a single JSON text message carrying `"v": 1`. The console
 * validates each incoming frame before it touches the store: a frame that
 * does not match the shapes below raises SchemaError, which the store turns
 * into a fatal banner (rendering halts rather than drawing a half-trusted
 * world). Extra fields are tolerated; missing or mistyped ones are not.
 */

export const PROTOCOL_VERSION = 1;

/** Grid cell as [i, j]; i is the column, j the row, j grows upward. */
export type Cell = [number, number];

export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

// --- server frame shapes ---------------------------------------------------------

export interface HelloFrame {
  v: 1;
  type: "hello";
  episode: string;
  scenario: string;
  seed: number;
  map_text: string;
  start: Cell;
  goal: Cell;
  path: Cell[];
  tick_seconds: number;
  max_ticks: number;
  paused: boolean;
  ticks_per_second: number;
}

export interface RobotView {
  cell: Cell;
  path_index: number;
  last_action: string;
  last_reward: number;
}

/** One true pedestrian joined with its nearest track (if any). */
export interface PedView {
  id: number;
  cell: Cell;
  active: boolean;
  g_true: boolean;
  latched: boolean;
  believed_aware: number | null;
  track_id: number | null;
}

export interface TrackView {
  id: number;
  x: number;
  y: number;
  latched: boolean;
  gaze_s: number;
  misses: number;
  believed_aware: number | null;
}

export interface BeliefPed {
  track_id: number;
  aware_fraction: number;
  /** Weighted cell histogram [[i, j, mass], ...]; masses sum to 1. */
  cells: [number, number, number][];
}

export interface StateFrame {
  v: 1;
  type: "state";
  episode: string;
  tick: number;
  robot: RobotView;
  peds: PedView[];
  tracks: TrackView[];
  belief_summary: { peds: BeliefPed[] };
  path: Cell[];
  bounds: { lower: number; upper: number };
  events: string[];
  outcome: string | null;
}

export interface MetricsFrame {
  v: 1;
  type: "metrics";
  episode: string;
  tick: number;
  discounted_return: number;
  replans: number;
  fallbacks: number;
  wait_events: number;
  min_clearance_m: number | null;
}

export interface EpisodeEndFrame {
  v: 1;
  type: "episode_end";
  episode: string;
  outcome: string;
  success: boolean;
  ticks: number;
  steps_to_goal: number | null;
  min_clearance_m: number | null;
  wait_events: [number, number, boolean][];
  mean_wait_distance_aware: number | null;
  mean_wait_distance_unaware: number | null;
  discounted_return: number;
  replans: number;
  fallbacks: number;
  mean_nodes_expanded: number;
}

export interface AckFrame {
  v: 1;
  type: "ack";
  command_id: number;
  status: "applied" | "rejected";
  reason?: string;
}

export interface ErrorFrame {
  v: 1;
  type: "error";
  detail: string;
}

export type ServerFrame =
  | HelloFrame
  | StateFrame
  | MetricsFrame
  | EpisodeEndFrame
  | AckFrame
  | ErrorFrame;

// --- client frame builders ---------------------------------------------------------

export type CommandKind =
  | "pause"
  | "resume"
  | "step"
  | "set_speed"
  | "reset"
  | "set_ped_target"
  | "toggle_gaze";

export interface CommandFrame {
  v: 1;
  type: CommandKind;
  command_id: number;
  [field: string]: unknown;
}

export function makeCommand(
  kind: CommandKind,
  commandId: number,
  fields: Record<string, unknown> = {},
): CommandFrame {
  return { v: PROTOCOL_VERSION, type: kind, command_id: commandId, ...fields };
}

// --- validation helpers ------------------------------------------------------------

function fail(path: string, want: string, got: unknown): never {
  throw new SchemaError(`${path}: expected ${want}, got ${JSON.stringify(got)}`);
}

function obj(v: unknown, path: string): Record<string, unknown> {
  if (typeof v !== "object" || v === null || Array.isArray(v)) {
    fail(path, "an object", v);
  }
  return v as Record<string, unknown>;
}

function str(v: unknown, path: string): string {
  if (typeof v !== "string") fail(path, "a string", v);
  return v;
}

function num(v: unknown, path: string): number {
  // JSON cannot carry NaN or infinities, so finite is the only valid case
  if (typeof v !== "number" || !Number.isFinite(v)) fail(path, "a number", v);
  return v;
}

function int(v: unknown, path: string): number {
  if (typeof v !== "number" || !Number.isInteger(v)) fail(path, "an integer", v);
  return v;
}

function bool(v: unknown, path: string): boolean {
  if (typeof v !== "boolean") fail(path, "a boolean", v);
  return v;
}

function numOrNull(v: unknown, path: string): number | null {
  return v === null ? null : num(v, path);
}

function intOrNull(v: unknown, path: string): number | null {
  return v === null ? null : int(v, path);
}

function strOrNull(v: unknown, path: string): string | null {
  return v === null ? null : str(v, path);
}

function arr(v: unknown, path: string): unknown[] {
  if (!Array.isArray(v)) fail(path, "an array", v);
  return v;
}

function cell(v: unknown, path: string): Cell {
  const a = arr(v, path);
  if (a.length !== 2) fail(path, "[i, j]", v);
  return [int(a[0], `${path}[0]`), int(a[1], `${path}[1]`)];
}

function cellList(v: unknown, path: string): Cell[] {
  return arr(v, path).map((c, k) => cell(c, `${path}[${k}]`));
}

function unit(v: unknown, path: string): number {
  const x = num(v, path);
  if (x < -1e-9 || x > 1 + 1e-9) fail(path, "a number in [0, 1]", v);
  return x;
}

// --- map text ------------------------------------------------------------------

export interface MapGrid {
  width: number;
  height: number;
  resolution: number;
  /** Row-major occupancy, index j * width + i. */
  blocked: boolean[];
}

export function isBlocked(map: MapGrid, i: number, j: number): boolean {
  if (i < 0 || j < 0 || i >= map.width || j >= map.height) return true;
  return map.blocked[j * map.width + i] === true;
}

/** Parse "W H RES" + H rows of {., #}; the first row is the top (j = H-1). */
export function parseMapText(text: string): MapGrid {
  const lines = text.split("\n").filter((l) => l.length > 0);
  const header = (lines[0] ?? "").trim().split(/\s+/);
  if (lines.length === 0 || header.length !== 3) {
    fail("map_text", "a 'W H RES' header", lines[0] ?? "");
  }
  const width = Number(header[0]);
  const height = Number(header[1]);
  const resolution = Number(header[2]);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    fail("map_text", "positive integer dimensions", lines[0]);
  }
  if (!Number.isFinite(resolution) || resolution <= 0) {
    fail("map_text", "a positive resolution", lines[0]);
  }
  if (lines.length !== height + 1) {
    fail("map_text", `${height} map rows`, lines.length - 1);
  }
  const blocked = new Array<boolean>(width * height).fill(false);
  for (let r = 1; r <= height; r += 1) {
    const row = lines[r] ?? "";
    const j = height - r; // rows are listed top-down
    if (row.length !== width) fail(`map_text row ${r}`, `${width} characters`, row);
    for (let i = 0; i < width; i += 1) {
      const ch = row[i];
      if (ch !== "." && ch !== "#") fail(`map_text row ${r}`, "'.' or '#'", ch);
      blocked[j * width + i] = ch === "#";
    }
  }
  return { width, height, resolution, blocked };
}

// --- frame parsers ---------------------------------------------------------------

function parseHello(m: Record<string, unknown>): HelloFrame {
  const frame: HelloFrame = {
    v: 1,
    type: "hello",
    episode: str(m.episode, "hello.episode"),
    scenario: str(m.scenario, "hello.scenario"),
    seed: int(m.seed, "hello.seed"),
    map_text: str(m.map_text, "hello.map_text"),
    start: cell(m.start, "hello.start"),
    goal: cell(m.goal, "hello.goal"),
    path: cellList(m.path, "hello.path"),
    tick_seconds: num(m.tick_seconds, "hello.tick_seconds"),
    max_ticks: int(m.max_ticks, "hello.max_ticks"),
    paused: bool(m.paused, "hello.paused"),
    ticks_per_second: num(m.ticks_per_second, "hello.ticks_per_second"),
  };
  if (frame.tick_seconds <= 0) fail("hello.tick_seconds", "> 0", frame.tick_seconds);
  if (frame.max_ticks <= 0) fail("hello.max_ticks", "> 0", frame.max_ticks);
  parseMapText(frame.map_text); // reject unparseable maps at the door
  return frame;
}

function parsePed(v: unknown, path: string): PedView {
  const m = obj(v, path);
  return {
    id: int(m.id, `${path}.id`),
    cell: cell(m.cell, `${path}.cell`),
    active: bool(m.active, `${path}.active`),
    g_true: bool(m.g_true, `${path}.g_true`),
    latched: bool(m.latched, `${path}.latched`),
    believed_aware: m.believed_aware === null
      ? null
      : unit(m.believed_aware, `${path}.believed_aware`),
    track_id: intOrNull(m.track_id, `${path}.track_id`),
  };
}

function parseTrack(v: unknown, path: string): TrackView {
  const m = obj(v, path);
  return {
    id: int(m.id, `${path}.id`),
    x: num(m.x, `${path}.x`),
    y: num(m.y, `${path}.y`),
    latched: bool(m.latched, `${path}.latched`),
    gaze_s: num(m.gaze_s, `${path}.gaze_s`),
    misses: int(m.misses, `${path}.misses`),
    believed_aware: m.believed_aware === null
      ? null
      : unit(m.believed_aware, `${path}.believed_aware`),
  };
}

export const HISTOGRAM_TOLERANCE = 1e-6;

function parseBeliefPed(v: unknown, path: string): BeliefPed {
  const m = obj(v, path);
  const cells = arr(m.cells, `${path}.cells`).map((entry, k) => {
    const e = arr(entry, `${path}.cells[${k}]`);
    if (e.length !== 3) fail(`${path}.cells[${k}]`, "[i, j, mass]", entry);
    return [
      int(e[0], `${path}.cells[${k}][0]`),
      int(e[1], `${path}.cells[${k}][1]`),
      unit(e[2], `${path}.cells[${k}][2]`),
    ] as [number, number, number];
  });
  // per-pedestrian occupancy histograms are probability masses: they must sum to 1
  const total = cells.reduce((acc, [, , w]) => acc + w, 0);
  if (cells.length > 0 && Math.abs(total - 1) > HISTOGRAM_TOLERANCE) {
    fail(`${path}.cells`, "masses summing to 1", total);
  }
  return {
    track_id: int(m.track_id, `${path}.track_id`),
    aware_fraction: unit(m.aware_fraction, `${path}.aware_fraction`),
    cells,
  };
}

const OUTCOMES = new Set(["goal", "collision", "timeout"]);

function outcome(v: unknown, path: string): string | null {
  const s = strOrNull(v, path);
  if (s !== null && !OUTCOMES.has(s)) fail(path, "goal | collision | timeout | null", v);
  return s;
}

function parseState(m: Record<string, unknown>): StateFrame {
  const robot = obj(m.robot, "state.robot");
  const belief = obj(m.belief_summary, "state.belief_summary");
  const bounds = obj(m.bounds, "state.bounds");
  const frame: StateFrame = {
    v: 1,
    type: "state",
    episode: str(m.episode, "state.episode"),
    tick: int(m.tick, "state.tick"),
    robot: {
      cell: cell(robot.cell, "state.robot.cell"),
      path_index: int(robot.path_index, "state.robot.path_index"),
      last_action: str(robot.last_action, "state.robot.last_action"),
      last_reward: num(robot.last_reward, "state.robot.last_reward"),
    },
    peds: arr(m.peds, "state.peds").map((p, k) => parsePed(p, `state.peds[${k}]`)),
    tracks: arr(m.tracks, "state.tracks").map((t, k) => parseTrack(t, `state.tracks[${k}]`)),
    belief_summary: {
      peds: arr(belief.peds, "state.belief_summary.peds").map((p, k) =>
        parseBeliefPed(p, `state.belief_summary.peds[${k}]`),
      ),
    },
    path: cellList(m.path, "state.path"),
    bounds: {
      lower: num(bounds.lower, "state.bounds.lower"),
      upper: num(bounds.upper, "state.bounds.upper"),
    },
    events: arr(m.events, "state.events").map((e, k) => str(e, `state.events[${k}]`)),
    outcome: outcome(m.outcome, "state.outcome"),
  };
  if (frame.tick < 0) fail("state.tick", ">= 0", frame.tick);
  if (frame.bounds.upper + 1e-6 < frame.bounds.lower) {
    fail("state.bounds", "lower <= upper", frame.bounds);
  }
  return frame;
}

function parseMetrics(m: Record<string, unknown>): MetricsFrame {
  return {
    v: 1,
    type: "metrics",
    episode: str(m.episode, "metrics.episode"),
    tick: int(m.tick, "metrics.tick"),
    discounted_return: num(m.discounted_return, "metrics.discounted_return"),
    replans: int(m.replans, "metrics.replans"),
    fallbacks: int(m.fallbacks, "metrics.fallbacks"),
    wait_events: int(m.wait_events, "metrics.wait_events"),
    min_clearance_m: numOrNull(m.min_clearance_m, "metrics.min_clearance_m"),
  };
}

function parseEpisodeEnd(m: Record<string, unknown>): EpisodeEndFrame {
  const waits = arr(m.wait_events, "episode_end.wait_events").map((w, k) => {
    const e = arr(w, `episode_end.wait_events[${k}]`);
    if (e.length !== 3) fail(`episode_end.wait_events[${k}]`, "[tick, distance, aware]", w);
    return [
      int(e[0], `episode_end.wait_events[${k}][0]`),
      num(e[1], `episode_end.wait_events[${k}][1]`),
      bool(e[2], `episode_end.wait_events[${k}][2]`),
    ] as [number, number, boolean];
  });
  const out = outcome(m.outcome, "episode_end.outcome");
  if (out === null) fail("episode_end.outcome", "a terminal outcome", m.outcome);
  return {
    v: 1,
    type: "episode_end",
    episode: str(m.episode, "episode_end.episode"),
    outcome: out,
    success: bool(m.success, "episode_end.success"),
    ticks: int(m.ticks, "episode_end.ticks"),
    steps_to_goal: intOrNull(m.steps_to_goal, "episode_end.steps_to_goal"),
    min_clearance_m: numOrNull(m.min_clearance_m, "episode_end.min_clearance_m"),
    wait_events: waits,
    mean_wait_distance_aware: numOrNull(
      m.mean_wait_distance_aware, "episode_end.mean_wait_distance_aware"),
    mean_wait_distance_unaware: numOrNull(
      m.mean_wait_distance_unaware, "episode_end.mean_wait_distance_unaware"),
    discounted_return: num(m.discounted_return, "episode_end.discounted_return"),
    replans: int(m.replans, "episode_end.replans"),
    fallbacks: int(m.fallbacks, "episode_end.fallbacks"),
    mean_nodes_expanded: num(m.mean_nodes_expanded, "episode_end.mean_nodes_expanded"),
  };
}

function parseAck(m: Record<string, unknown>): AckFrame {
  const status = str(m.status, "ack.status");
  if (status !== "applied" && status !== "rejected") {
    fail("ack.status", "applied | rejected", m.status);
  }
  const frame: AckFrame = {
    v: 1,
    type: "ack",
    command_id: int(m.command_id, "ack.command_id"),
    status,
  };
  if (m.reason !== undefined) frame.reason = str(m.reason, "ack.reason");
  if (status === "rejected" && frame.reason === undefined) {
    fail("ack.reason", "a reason on rejected acks", m.reason);
  }
  return frame;
}

/** Parse one raw websocket text message into a validated server frame. */
export function parseServerFrame(raw: string): ServerFrame {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    throw new SchemaError("frame is not valid JSON");
  }
  const m = obj(data, "frame");
  if (m.v !== PROTOCOL_VERSION) fail("frame.v", `${PROTOCOL_VERSION}`, m.v);
  const kind = str(m.type, "frame.type");
  switch (kind) {
    case "hello":
      return parseHello(m);
    case "state":
      return parseState(m);
    case "metrics":
      return parseMetrics(m);
    case "episode_end":
      return parseEpisodeEnd(m);
    case "ack":
      return parseAck(m);
    case "error":
      return { v: 1, type: "error", detail: str(m.detail, "error.detail") };
    default:
      return fail("frame.type", "a known frame type", kind);
  }
}
