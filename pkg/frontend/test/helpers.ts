/** Shared test doubles: frame builders, a recording 2D surface, a fake socket. */

import { SocketLike } from "../src/client.js";
import { Surface } from "../src/renderer.js";

// the map used across tests: one free middle row in a 4x3 box
export const MAP_TEXT = "4 3 1.0\n####\n....\n####\n";

export function helloFrame(overrides: Record<string, unknown> = {}): Record<string, unknown> {
  return {
    v: 1,
    type: "hello",
    episode: "ep-0",
    scenario: "toy",
    seed: 3,
    map_text: MAP_TEXT,
    start: [0, 1],
    goal: [3, 1],
    path: [[0, 1], [1, 1], [2, 1], [3, 1]],
    tick_seconds: 2.0,
    max_ticks: 10,
    paused: false,
    ticks_per_second: 1.0,
    ...overrides,
  };
}

export function stateFrame(overrides: Record<string, unknown> = {}): Record<string, unknown> {
  return {
    v: 1,
    type: "state",
    episode: "ep-0",
    tick: 0,
    robot: { cell: [1, 1], path_index: 1, last_action: "GO", last_reward: -1.0 },
    peds: [{
      id: 0, cell: [2, 1], active: true, g_true: true, latched: true,
      believed_aware: 0.9, track_id: 4,
    }],
    tracks: [{
      id: 4, x: 2.5, y: 1.5, latched: true, gaze_s: 6.0, misses: 0,
      believed_aware: 0.9,
    }],
    belief_summary: {
      peds: [{ track_id: 4, aware_fraction: 0.9, cells: [[2, 1, 0.5], [3, 1, 0.5]] }],
    },
    path: [[0, 1], [1, 1], [2, 1], [3, 1]],
    bounds: { lower: -12.5, upper: 4.75 },
    events: ["track_birth:4"],
    outcome: null,
    ...overrides,
  };
}

export function metricsFrame(overrides: Record<string, unknown> = {}): Record<string, unknown> {
  return {
    v: 1,
    type: "metrics",
    episode: "ep-0",
    tick: 0,
    discounted_return: -1.0,
    replans: 0,
    fallbacks: 0,
    wait_events: 0,
    min_clearance_m: 1.0,
    ...overrides,
  };
}

export function episodeEndFrame(overrides: Record<string, unknown> = {}): Record<string, unknown> {
  return {
    v: 1,
    type: "episode_end",
    episode: "ep-0",
    outcome: "goal",
    success: true,
    ticks: 4,
    steps_to_goal: 4,
    min_clearance_m: 1.0,
    wait_events: [[1, 1.5, true]],
    mean_wait_distance_aware: 1.5,
    mean_wait_distance_unaware: null,
    discounted_return: 860.2,
    replans: 0,
    fallbacks: 0,
    mean_nodes_expanded: 41.5,
    ...overrides,
  };
}

export function ackFrame(overrides: Record<string, unknown> = {}): Record<string, unknown> {
  return { v: 1, type: "ack", command_id: 1, status: "applied", ...overrides };
}

// --- recording surface ---------------------------------------------------------

export interface SurfaceOp {
  op: string;
  args: (number | string | number[])[];
  fillStyle: string;
  strokeStyle: string;
  globalAlpha: number;
  lineWidth: number;
  dash: number[];
}

/** Records every draw call with the style that was active when it ran. */
export class FakeSurface implements Surface {
  fillStyle = "";
  strokeStyle = "";
  lineWidth = 1;
  font = "";
  globalAlpha = 1;
  ops: SurfaceOp[] = [];
  private dash: number[] = [];

  private log(op: string, ...args: (number | string | number[])[]): void {
    this.ops.push({
      op, args,
      fillStyle: this.fillStyle,
      strokeStyle: this.strokeStyle,
      globalAlpha: this.globalAlpha,
      lineWidth: this.lineWidth,
      dash: [...this.dash],
    });
  }

  clearRect(x: number, y: number, w: number, h: number): void { this.log("clearRect", x, y, w, h); }
  fillRect(x: number, y: number, w: number, h: number): void { this.log("fillRect", x, y, w, h); }
  strokeRect(x: number, y: number, w: number, h: number): void { this.log("strokeRect", x, y, w, h); }
  beginPath(): void { this.log("beginPath"); }
  moveTo(x: number, y: number): void { this.log("moveTo", x, y); }
  lineTo(x: number, y: number): void { this.log("lineTo", x, y); }
  arc(x: number, y: number, r: number, a0: number, a1: number): void { this.log("arc", x, y, r, a0, a1); }
  stroke(): void { this.log("stroke"); }
  fill(): void { this.log("fill"); }
  fillText(text: string, x: number, y: number): void { this.log("fillText", text, x, y); }
  setLineDash(segments: number[]): void { this.dash = [...segments]; this.log("setLineDash", segments); }

  texts(): string[] {
    return this.ops.filter((o) => o.op === "fillText").map((o) => String(o.args[0]));
  }

  /** Ops named fill* are matched on fillStyle, stroke* on strokeStyle. */
  count(op: string, style?: string): number {
    return this.ops.filter((o) => {
      if (o.op !== op) return false;
      if (style === undefined) return true;
      if (op.startsWith("fill")) return o.fillStyle === style;
      if (op.startsWith("stroke")) return o.strokeStyle === style;
      return o.fillStyle === style || o.strokeStyle === style;
    }).length;
  }
}

// --- fake socket -----------------------------------------------------------------

export class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onmessage: ((data: string) => void) | null = null;
  onclose: (() => void) | null = null;
  /** Called on every client send, letting tests script server replies. */
  replyHook: ((data: string) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
    this.replyHook?.(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  open(): void {
    this.onopen?.();
  }

  message(data: string): void {
    this.onmessage?.(data);
  }

  /** Server-side drop: the close event without the client asking for it. */
  drop(): void {
    this.onclose?.();
  }
}
