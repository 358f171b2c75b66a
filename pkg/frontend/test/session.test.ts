/**
 * End-to-end console checks.
 *
 * Part 1 replays a 200-tick recorded server session (test/fixtures/
 * session.jsonl, regenerated by scripts/record_session.py) through the real
 * parse -> store -> render pipeline and requires zero schema errors.
 *
 * Part 2 drives every command kind against a loopback server and requires
 * each one to be acknowledged within the 2 s deadline.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterEach, beforeEach, describe, expect, test, vi } from "vitest";

import { ConsoleClient } from "../src/client.js";
import { COLORS, render } from "../src/renderer.js";
import { ConsoleStore } from "../src/state.js";
import { FakeSocket, FakeSurface, helloFrame, stateFrame } from "./helpers.js";

const FIXTURE = join(dirname(fileURLToPath(import.meta.url)), "fixtures", "session.jsonl");

describe("recorded 200-tick session", () => {
  const lines = readFileSync(FIXTURE, "utf8").trimEnd().split("\n");

  test("replays through parse, store, and render without schema errors", () => {
    const store = new ConsoleStore();
    let states = 0;
    let sawLatchRing = false;
    let sawWait = false;

    for (const [n, line] of lines.entries()) {
      const frame = store.applyRaw(line, n);
      expect(store.fatal).toBeNull();
      expect(frame).not.toBeNull();
      if (frame?.type !== "state") continue;
      states += 1;
      const ctx = new FakeSurface();
      render(store, ctx, 960, 640); // throws on any render-time violation
      if (ctx.count("stroke", COLORS.latchRing) > 0) sawLatchRing = true;
      if (frame.robot.last_action === "WAIT") sawWait = true;
    }

    expect(states).toBe(200);
    expect(store.state?.tick).toBe(199);
    expect(store.episodeEnd?.outcome).toBe("timeout");
    expect(store.episodeEnd?.ticks).toBe(200);
    // the session is only a meaningful render check if it exercised the
    // interesting paths: a latched pedestrian and wait decisions
    expect(sawLatchRing).toBe(true);
    expect(sawWait).toBe(true);
  });

  test("the recorded frames keep tick bookkeeping intact", () => {
    const store = new ConsoleStore();
    let lastStateTick = -1;
    for (const [n, line] of lines.entries()) {
      const frame = store.applyRaw(line, n);
      if (frame?.type === "state") {
        expect(frame.tick).toBe(lastStateTick + 1);
        lastStateTick = frame.tick;
      }
      if (frame?.type === "metrics") {
        expect(frame.tick).toBe(lastStateTick);
      }
    }
    expect(lastStateTick).toBe(199);
  });
});

describe("command acknowledgement integration", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  /** Loopback server: applies every command after a fixed network delay. */
  function loopback(delayMs: number) {
    const store = new ConsoleStore();
    const sockets: FakeSocket[] = [];
    const client = new ConsoleClient({
      url: "ws://test/ws",
      store,
      connect: () => {
        const sock = new FakeSocket();
        sock.replyHook = (data) => {
          const cmd = JSON.parse(data) as { command_id: number };
          setTimeout(() => {
            sock.message(JSON.stringify(
              { v: 1, type: "ack", command_id: cmd.command_id, status: "applied" }));
          }, delayMs);
        };
        sockets.push(sock);
        return sock;
      },
    });
    client.start();
    const sock = sockets[0];
    if (sock === undefined) throw new Error("client opened no socket");
    sock.open();
    sock.message(JSON.stringify(helloFrame()));
    sock.message(JSON.stringify(stateFrame()));
    return { store, client, sock };
  }

  test("every command kind is acked within the 2 s deadline", () => {
    const { store, client } = loopback(120);
    const sent = [
      client.pause(),
      client.step(),
      client.setSpeed(4.0),
      client.toggleGaze(0, false),
      client.setPedTarget(0, [3, 1]),
      client.resume(),
      client.reset(),
    ];
    expect(sent).toEqual([1, 2, 3, 4, 5, 6, 7]);

    vi.advanceTimersByTime(120); // all acks arrive together, well inside 2 s
    expect(store.pending.size).toBe(0);
    expect(store.ackLog).toHaveLength(7);
    for (const record of store.ackLog) {
      expect(record.status).toBe("applied");
      expect(record.latencyMs).toBeLessThanOrEqual(2000);
    }
    // nothing left to fire: no timeout may resolve a command twice
    vi.advanceTimersByTime(10000);
    expect(store.ackLog).toHaveLength(7);
  });

  test("a command the server never answers resolves as a timeout instead", () => {
    const { store, client } = loopback(5000); // slower than the deadline
    client.pause();
    vi.advanceTimersByTime(2000);
    expect(store.ackLog[0]?.status).toBe("timeout");
    // the late ack is surfaced as an unmatched-ack toast, not applied
    vi.advanceTimersByTime(3000);
    expect(store.ackLog).toHaveLength(1);
    expect(store.toasts.at(-1)?.text).toMatch(/unmatched ack/);
  });
});
