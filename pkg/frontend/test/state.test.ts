import { describe, expect, test } from "vitest";

import { ConsoleStore } from "../src/state.js";
import {
  ackFrame,
  episodeEndFrame,
  helloFrame,
  metricsFrame,
  stateFrame,
} from "./helpers.js";

function feed(store: ConsoleStore, frame: Record<string, unknown>, at = 0) {
  return store.applyRaw(JSON.stringify(frame), at);
}

describe("frame intake", () => {
  test("hello then state then metrics populates the view", () => {
    const store = new ConsoleStore();
    feed(store, helloFrame());
    feed(store, stateFrame());
    feed(store, metricsFrame());
    expect(store.hello?.scenario).toBe("toy");
    expect(store.map?.width).toBe(4);
    expect(store.state?.tick).toBe(0);
    expect(store.metrics?.tick).toBe(0);
    expect(store.fatal).toBeNull();
    expect(store.framesSeen).toBe(3);
  });

  test("a schema error pins the store fatal and freezes intake", () => {
    const store = new ConsoleStore();
    feed(store, helloFrame());
    expect(feed(store, { v: 1, type: "state", tick: -1 })).toBeNull();
    expect(store.fatal).toMatch(/state\./);
    // later frames, even valid ones, no longer move the view
    feed(store, stateFrame());
    expect(store.state).toBeNull();
  });

  test("state before hello is fatal", () => {
    const store = new ConsoleStore();
    feed(store, stateFrame());
    expect(store.fatal).toMatch(/before any hello/);
  });

  test("ticks must strictly increase within an episode", () => {
    const store = new ConsoleStore();
    feed(store, helloFrame());
    feed(store, stateFrame({ tick: 3 }));
    feed(store, stateFrame({ tick: 3 }));
    expect(store.fatal).toMatch(/strictly increase/);
  });

  test("metrics must match the tick of the state they follow", () => {
    const store = new ConsoleStore();
    feed(store, helloFrame());
    feed(store, stateFrame({ tick: 2 }));
    feed(store, metricsFrame({ tick: 1 }));
    expect(store.fatal).toMatch(/metrics for tick 1/);
  });

  test("a frame for a foreign episode is fatal", () => {
    const store = new ConsoleStore();
    feed(store, helloFrame());
    feed(store, stateFrame({ episode: "ep-9" }));
    expect(store.fatal).toMatch(/ep-9/);
  });

  test("a fresh hello resets the episode view for the new episode", () => {
    const store = new ConsoleStore();
    feed(store, helloFrame());
    feed(store, stateFrame({ tick: 5 }));
    feed(store, episodeEndFrame());
    feed(store, helloFrame({ episode: "ep-1" }));
    expect(store.state).toBeNull();
    expect(store.episodeEnd).toBeNull();
    // the new episode restarts at tick 0, below the old tick 5
    feed(store, stateFrame({ episode: "ep-1", tick: 0 }));
    expect(store.fatal).toBeNull();
    expect(store.state?.tick).toBe(0);
  });

  test("server error frames surface as toasts, not fatals", () => {
    const store = new ConsoleStore();
    feed(store, { v: 1, type: "error", detail: "frame is not valid JSON" });
    expect(store.fatal).toBeNull();
    expect(store.toasts.at(-1)?.text).toMatch(/not valid JSON/);
  });
});

describe("command bookkeeping", () => {
  test("an applied ack clears the pending command and logs its latency", () => {
    const store = new ConsoleStore();
    feed(store, helloFrame());
    store.commandSent({ id: 1, kind: "pause", sentAt: 100 });
    expect(store.isPending("pause")).toBe(true);
    feed(store, ackFrame({ command_id: 1 }), 350);
    expect(store.isPending("pause")).toBe(false);
    expect(store.ackLog).toEqual([
      { id: 1, kind: "pause", status: "applied", latencyMs: 250 },
    ]);
  });

  test("a rejected ack raises a toast with the server's reason", () => {
    const store = new ConsoleStore();
    feed(store, helloFrame());
    store.commandSent({ id: 2, kind: "resume", sentAt: 0 });
    feed(store, ackFrame({ command_id: 2, status: "rejected", reason: "episode over" }));
    expect(store.toasts.at(-1)?.text).toMatch(/resume rejected: episode over/);
    expect(store.ackLog[0]?.status).toBe("rejected");
  });

  test("a timeout resolves the command exactly once", () => {
    const store = new ConsoleStore();
    store.commandSent({ id: 3, kind: "step", sentAt: 0 });
    expect(store.commandTimedOut(3, 2000)).toBe(true);
    expect(store.commandTimedOut(3, 2001)).toBe(false); // already resolved
    expect(store.ackLog).toEqual([
      { id: 3, kind: "step", status: "timeout", latencyMs: 2000 },
    ]);
    expect(store.pending.size).toBe(0);
  });

  test("an ack after the timeout is reported, never silently dropped", () => {
    const store = new ConsoleStore();
    feed(store, helloFrame());
    store.commandSent({ id: 4, kind: "reset", sentAt: 0 });
    store.commandTimedOut(4, 2000);
    feed(store, ackFrame({ command_id: 4 }), 2100);
    expect(store.toasts.at(-1)?.text).toMatch(/unmatched ack/);
  });

  test("pendingTarget exposes the cell awaiting its ack", () => {
    const store = new ConsoleStore();
    store.commandSent({ id: 5, kind: "set_ped_target", sentAt: 0, pedId: 1, cell: [2, 1] });
    expect(store.pendingTarget()?.cell).toEqual([2, 1]);
  });
});

describe("subscriptions", () => {
  test("listeners fire on every store change until unsubscribed", () => {
    const store = new ConsoleStore();
    let calls = 0;
    const off = store.subscribe(() => { calls += 1; });
    feed(store, helloFrame());
    store.selectPed(0);
    off();
    store.selectPed(null);
    expect(calls).toBe(2);
  });
});
