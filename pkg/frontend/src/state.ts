/**
 * Single state store for the console.
 *
 * Everything the UI shows lives here: the latest validated frames, the parsed
 * map, connection status, pending commands awaiting their ack, and transient
 * toasts. Socket events and UI events both funnel through this object one at
 * a time, so there is never a second source of truth to reconcile.
 *
 * Invariants enforced on intake:
 *   - state/metrics/episode_end frames must follow a hello for their episode;
 *   - ticks strictly increase within an episode;
 *   - a metrics frame carries the same tick as the state it follows;
 *   - every sent command either receives its ack or is timed out, and both
 *     paths land in `ackLog` (nothing is dropped silently).
 *
 * A violated invariant or a schema error sets `fatal`; from then on the
 * renderer shows only the error banner and incoming frames are ignored.
 */

import {
  Cell,
  MapGrid,
  SchemaError,
  ServerFrame,
  HelloFrame,
  StateFrame,
  MetricsFrame,
  EpisodeEndFrame,
  CommandKind,
  parseMapText,
  parseServerFrame,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface PendingCommand {
  id: number;
  kind: CommandKind;
  sentAt: number;
  /** For set_ped_target: the ped and cell, so the renderer can mark it. */
  pedId?: number;
  cell?: Cell;
}

export interface AckRecord {
  id: number;
  kind: CommandKind;
  status: "applied" | "rejected" | "timeout";
  latencyMs: number;
  reason?: string;
}

export interface Toast {
  kind: "info" | "error";
  text: string;
  at: number;
}

export class ConsoleStore {
  connection: ConnectionStatus = "closed";
  hello: HelloFrame | null = null;
  map: MapGrid | null = null;
  state: StateFrame | null = null;
  metrics: MetricsFrame | null = null;
  episodeEnd: EpisodeEndFrame | null = null;
  fatal: string | null = null;
  toasts: Toast[] = [];
  pending = new Map<number, PendingCommand>();
  ackLog: AckRecord[] = [];
  selectedPed: number | null = null;
  framesSeen = 0;

  private listeners = new Set<() => void>();

  subscribe(fn: () => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  // --- socket intake ---------------------------------------------------------------

  /**
   * Validate and apply one raw text frame. Returns the parsed frame so the
   * client can settle ack timers, or null if the frame was rejected.
   */
  applyRaw(raw: string, at: number): ServerFrame | null {
    if (this.fatal !== null) return null;
    let frame: ServerFrame;
    try {
      frame = parseServerFrame(raw);
    } catch (err) {
      if (err instanceof SchemaError) {
        this.halt(err.message);
        return null;
      }
      throw err;
    }
    this.applyFrame(frame, at);
    return frame;
  }

  applyFrame(frame: ServerFrame, at: number): void {
    if (this.fatal !== null) return;
    switch (frame.type) {
      case "hello":
        this.hello = frame;
        this.map = parseMapText(frame.map_text);
        // fresh episode: world frames from the previous one are gone for good
        this.state = null;
        this.metrics = null;
        this.episodeEnd = null;
        break;
      case "state": {
        if (!this.checkEpisode(frame.episode, "state")) return;
        if (this.state !== null && frame.tick <= this.state.tick) {
          this.halt(
            `state tick went from ${this.state.tick} to ${frame.tick}; ` +
            "ticks must strictly increase within an episode");
          return;
        }
        this.state = frame;
        break;
      }
      case "metrics": {
        if (!this.checkEpisode(frame.episode, "metrics")) return;
        if (this.state !== null && frame.tick !== this.state.tick) {
          this.halt(
            `metrics for tick ${frame.tick} arrived while the state shows ` +
            `tick ${this.state.tick}`);
          return;
        }
        this.metrics = frame;
        break;
      }
      case "episode_end": {
        if (!this.checkEpisode(frame.episode, "episode_end")) return;
        this.episodeEnd = frame;
        break;
      }
      case "ack": {
        const cmd = this.pending.get(frame.command_id);
        if (cmd === undefined) {
          // the matching timer already fired, or the ack is not ours
          this.toast("info", `unmatched ack for command ${frame.command_id}`, at);
          break;
        }
        this.pending.delete(frame.command_id);
        const record: AckRecord = {
          id: frame.command_id,
          kind: cmd.kind,
          status: frame.status,
          latencyMs: at - cmd.sentAt,
        };
        if (frame.reason !== undefined) record.reason = frame.reason;
        this.ackLog.push(record);
        if (frame.status === "rejected") {
          this.toast("error", `${cmd.kind} rejected: ${frame.reason}`, at);
        }
        break;
      }
      case "error":
        this.toast("error", `server: ${frame.detail}`, at);
        break;
    }
    this.framesSeen += 1;
    this.emit();
  }

  private checkEpisode(episode: string, kind: string): boolean {
    if (this.hello === null) {
      this.halt(`${kind} frame arrived before any hello`);
      return false;
    }
    if (episode !== this.hello.episode) {
      this.halt(
        `${kind} frame for episode ${episode} while showing ${this.hello.episode}`);
      return false;
    }
    return true;
  }

  /** Stop the world view: from here on only the error banner is drawn. */
  halt(message: string): void {
    this.fatal = message;
    this.emit();
  }

  // --- command bookkeeping ---------------------------------------------------------

  commandSent(cmd: PendingCommand): void {
    this.pending.set(cmd.id, cmd);
    this.emit();
  }

  /** Called by the client when the ack deadline passes; no-op if already acked. */
  commandTimedOut(id: number, at: number): boolean {
    const cmd = this.pending.get(id);
    if (cmd === undefined) return false;
    this.pending.delete(id);
    this.ackLog.push({
      id,
      kind: cmd.kind,
      status: "timeout",
      latencyMs: at - cmd.sentAt,
    });
    this.toast("error", `${cmd.kind} was not acknowledged in time`, at);
    this.emit();
    return true;
  }

  /** True while a command of this kind is awaiting its ack (control disabled). */
  isPending(kind: CommandKind): boolean {
    for (const cmd of this.pending.values()) {
      if (cmd.kind === kind) return true;
    }
    return false;
  }

  /** Unacked set_ped_target, if any, so the renderer can mark the cell. */
  pendingTarget(): PendingCommand | null {
    for (const cmd of this.pending.values()) {
      if (cmd.kind === "set_ped_target") return cmd;
    }
    return null;
  }

  // --- UI events -------------------------------------------------------------------

  setConnection(status: ConnectionStatus): void {
    this.connection = status;
    this.emit();
  }

  selectPed(id: number | null): void {
    this.selectedPed = id;
    this.emit();
  }

  toast(kind: Toast["kind"], text: string, at: number): void {
    this.toasts.push({ kind, text, at });
    if (this.toasts.length > 6) this.toasts.splice(0, this.toasts.length - 6);
    this.emit();
  }
}
