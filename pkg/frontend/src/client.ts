/**
 * Websocket client for the live bridge.
 *
 * Responsibilities:
 *   - hand every incoming text frame to the store (which validates it);
 *   - issue a fresh command_id per command and start a 2 s ack timer; the
 *     store marks the command pending until the ack arrives or the timer
 *     fires, so no command is ever dropped silently;
 *   - reconnect with exponential backoff after a drop. The server replays
 *     hello plus the latest state on every connect, so reattaching to the
 *     current episode needs no extra subscription traffic from our side.
 *
 * The socket, clock, and timers are injected so tests can drive everything
 * deterministically.
 */

import { Cell, CommandKind, makeCommand } from "./protocol.js";
import { ConsoleStore, PendingCommand } from "./state.js";

/** What the client needs from a websocket; browser WebSocket is adapted to it. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((data: string) => void) | null;
  onclose: (() => void) | null;
}

export interface ClientOptions {
  url: string;
  connect: (url: string) => SocketLike;
  store: ConsoleStore;
  now?: () => number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
  ackTimeoutMs?: number;
  backoffBaseMs?: number;
  backoffCapMs?: number;
}

export const DEFAULT_ACK_TIMEOUT_MS = 2000;
export const DEFAULT_BACKOFF_BASE_MS = 500;
export const DEFAULT_BACKOFF_CAP_MS = 8000;

/** Delay before reconnect attempt n (0-based): base doubling up to the cap. */
export function backoffDelayMs(
  attempt: number,
  baseMs: number = DEFAULT_BACKOFF_BASE_MS,
  capMs: number = DEFAULT_BACKOFF_CAP_MS,
): number {
  return Math.min(baseMs * 2 ** attempt, capMs);
}

export class ConsoleClient {
  private readonly opts: Required<ClientOptions>;
  private sock: SocketLike | null = null;
  private nextCommandId = 1;
  private attempt = 0;
  private ackTimers = new Map<number, unknown>();
  private reconnectTimer: unknown = null;
  private stopped = false;

  constructor(options: ClientOptions) {
    this.opts = {
      now: () => Date.now(),
      setTimer: (fn, ms) => setTimeout(fn, ms),
      clearTimer: (h) => clearTimeout(h as Parameters<typeof clearTimeout>[0]),
      ackTimeoutMs: DEFAULT_ACK_TIMEOUT_MS,
      backoffBaseMs: DEFAULT_BACKOFF_BASE_MS,
      backoffCapMs: DEFAULT_BACKOFF_CAP_MS,
      ...options,
    };
  }

  start(): void {
    this.stopped = false;
    this.open();
  }

  stop(): void {
    this.stopped = true;
    if (this.reconnectTimer !== null) {
      this.opts.clearTimer(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.sock?.close();
    this.sock = null;
  }

  private open(): void {
    const store = this.opts.store;
    store.setConnection("connecting");
    const sock = this.opts.connect(this.opts.url);
    this.sock = sock;
    sock.onopen = () => {
      this.attempt = 0;
      store.setConnection("open");
    };
    sock.onmessage = (data) => {
      const frame = store.applyRaw(data, this.opts.now());
      if (frame !== null && frame.type === "ack") {
        const handle = this.ackTimers.get(frame.command_id);
        if (handle !== undefined) {
          this.opts.clearTimer(handle);
          this.ackTimers.delete(frame.command_id);
        }
      }
    };
    sock.onclose = () => {
      if (this.sock !== sock) return; // an older socket closing late
      this.sock = null;
      store.setConnection("closed");
      // commands still pending on the dead socket are resolved by their
      // ack timers; the reconnect must not resurrect them
      if (!this.stopped) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    const delay = backoffDelayMs(
      this.attempt, this.opts.backoffBaseMs, this.opts.backoffCapMs);
    this.attempt += 1;
    this.reconnectTimer = this.opts.setTimer(() => {
      this.reconnectTimer = null;
      if (!this.stopped) this.open();
    }, delay);
  }

  /**
   * Send one command. Returns its command_id, or null when not connected
   * (the refusal is surfaced as a toast, never dropped without a trace).
   */
  send(
    kind: CommandKind,
    fields: Record<string, unknown> = {},
    mark: Partial<Pick<PendingCommand, "pedId" | "cell">> = {},
  ): number | null {
    const store = this.opts.store;
    const at = this.opts.now();
    if (this.sock === null || store.connection !== "open") {
      store.toast("error", `cannot send ${kind}: not connected`, at);
      return null;
    }
    const id = this.nextCommandId;
    this.nextCommandId += 1;
    store.commandSent({ id, kind, sentAt: at, ...mark });
    this.ackTimers.set(id, this.opts.setTimer(() => {
      this.ackTimers.delete(id);
      store.commandTimedOut(id, this.opts.now());
    }, this.opts.ackTimeoutMs));
    this.sock.send(JSON.stringify(makeCommand(kind, id, fields)));
    return id;
  }

  pause(): number | null {
    return this.send("pause");
  }

  resume(): number | null {
    return this.send("resume");
  }

  step(): number | null {
    return this.send("step");
  }

  setSpeed(ticksPerSecond: number): number | null {
    return this.send("set_speed", { ticks_per_s: ticksPerSecond });
  }

  reset(scenario?: string): number | null {
    return this.send("reset", scenario === undefined ? {} : { scenario });
  }

  setPedTarget(pedId: number, cell: Cell): number | null {
    return this.send("set_ped_target", { id: pedId, cell }, { pedId, cell });
  }

  toggleGaze(pedId: number, on: boolean): number | null {
    return this.send("toggle_gaze", { id: pedId, on }, { pedId });
  }
}
