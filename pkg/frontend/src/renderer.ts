/**
 * Canvas renderer. Draws one frame of the console from a store snapshot.
 *
 * The 2D surface is injected (CanvasRenderingContext2D satisfies it
 * structurally) so tests can render against a recording stub. Rendering is a
 * pure function of the store: no animation state lives here.
 *
 * Draw order: grid, belief heat overlay, planned path, goal, pending target
 * marker, pedestrians (colored by true gaze, ringed when latched, selection
 * highlight), robot with its last action label, HUD text, episode banner,
 * toasts. When the store is fatal only the error banner is drawn.
 */

import { Cell, MapGrid, SchemaError, isBlocked, HISTOGRAM_TOLERANCE } from "./protocol.js";
import { ConsoleStore } from "./state.js";

/** The subset of CanvasRenderingContext2D the renderer needs. */
export interface Surface {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
  setLineDash(segments: number[]): void;
}

export const COLORS = {
  background: "#10141a",
  free: "#1d232c",
  wall: "#3b4454",
  gridLine: "#2a313d",
  path: "#4c8dff",
  goal: "#37d67a",
  robot: "#4c8dff",
  pedGazing: "#37d67a",
  pedNotGazing: "#f5a623",
  pedInactive: "#5c6370",
  latchRing: "#c3f7d9",
  selection: "#ffffff",
  pendingTarget: "#f5a623",
  belief: "#e04f5f",
  hud: "#d7dde6",
  bannerBg: "#202835",
  bannerText: "#f0f3f7",
  errorBg: "#5f1d24",
  errorText: "#ffd7dc",
  toastError: "#ff8b97",
  toastInfo: "#9fb3c8",
} as const;

const HUD_LINE_PX = 14;

/** Side of one grid cell in pixels for a map fitted into w x h. */
export function cellSizePx(map: MapGrid, widthPx: number, heightPx: number): number {
  return Math.max(1, Math.floor(Math.min(widthPx / map.width, heightPx / map.height)));
}

/** Cell under a canvas point, or null when it falls outside the map. */
export function cellAtPoint(
  map: MapGrid,
  widthPx: number,
  heightPx: number,
  x: number,
  y: number,
): Cell | null {
  const side = cellSizePx(map, widthPx, heightPx);
  const i = Math.floor(x / side);
  const jTop = Math.floor(y / side); // canvas y grows downward
  const j = map.height - 1 - jTop;
  if (i < 0 || j < 0 || i >= map.width || j >= map.height) return null;
  return [i, j];
}

function cellRect(map: MapGrid, side: number, i: number, j: number): [number, number] {
  return [i * side, (map.height - 1 - j) * side];
}

function cellCenter(map: MapGrid, side: number, i: number, j: number): [number, number] {
  const [x, y] = cellRect(map, side, i, j);
  return [x + side / 2, y + side / 2];
}

function drawBanner(ctx: Surface, w: number, h: number, bg: string, fg: string,
                    lines: string[]): void {
  const bandH = HUD_LINE_PX * (lines.length + 2);
  ctx.globalAlpha = 0.92;
  ctx.fillStyle = bg;
  ctx.fillRect(0, h / 2 - bandH / 2, w, bandH);
  ctx.globalAlpha = 1;
  ctx.fillStyle = fg;
  ctx.font = `${HUD_LINE_PX}px monospace`;
  lines.forEach((line, k) => {
    ctx.fillText(line, 12, h / 2 - bandH / 2 + HUD_LINE_PX * (k + 1.5));
  });
}

export function render(store: ConsoleStore, ctx: Surface, w: number, h: number): void {
  ctx.setLineDash([]);
  ctx.globalAlpha = 1;
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, w, h);

  if (store.fatal !== null) {
    drawBanner(ctx, w, h, COLORS.errorBg, COLORS.errorText,
               ["protocol error, rendering halted:", store.fatal]);
    return;
  }
  if (store.hello === null || store.map === null) {
    ctx.fillStyle = COLORS.hud;
    ctx.font = `${HUD_LINE_PX}px monospace`;
    ctx.fillText(`waiting for hello (${store.connection})`, 12, HUD_LINE_PX * 1.5);
    return;
  }

  const map = store.map;
  const side = cellSizePx(map, w, h);

  ctx.fillStyle = COLORS.free;
  ctx.fillRect(0, 0, map.width * side, map.height * side);
  ctx.fillStyle = COLORS.wall;
  for (let j = 0; j < map.height; j += 1) {
    for (let i = 0; i < map.width; i += 1) {
      if (isBlocked(map, i, j)) {
        const [x, y] = cellRect(map, side, i, j);
        ctx.fillRect(x, y, side, side);
      }
    }
  }

  const state = store.state;

  if (state !== null) {
    // belief heat: alpha tracks each cell's probability mass
    for (const bp of state.belief_summary.peds) {
      const total = bp.cells.reduce((acc, [, , m]) => acc + m, 0);
      if (bp.cells.length > 0 && Math.abs(total - 1) > HISTOGRAM_TOLERANCE) {
        throw new SchemaError(
          `belief histogram for track ${bp.track_id} sums to ${total}, not 1`);
      }
      ctx.fillStyle = COLORS.belief;
      for (const [i, j, mass] of bp.cells) {
        ctx.globalAlpha = Math.min(1, mass) * 0.55;
        const [x, y] = cellRect(map, side, i, j);
        ctx.fillRect(x, y, side, side);
      }
    }
    ctx.globalAlpha = 1;
  }

  const path = state !== null ? state.path : store.hello.path;
  if (path.length > 1) {
    ctx.strokeStyle = COLORS.path;
    ctx.lineWidth = Math.max(1, side / 8);
    ctx.beginPath();
    const first = path[0] as Cell;
    const [x0, y0] = cellCenter(map, side, first[0], first[1]);
    ctx.moveTo(x0, y0);
    for (let k = 1; k < path.length; k += 1) {
      const wp = path[k] as Cell;
      const [x, y] = cellCenter(map, side, wp[0], wp[1]);
      ctx.lineTo(x, y);
    }
    ctx.stroke();
  }

  ctx.strokeStyle = COLORS.goal;
  ctx.lineWidth = 2;
  const [gx, gy] = cellRect(map, side, store.hello.goal[0], store.hello.goal[1]);
  ctx.strokeRect(gx + 2, gy + 2, side - 4, side - 4);

  const target = store.pendingTarget();
  if (target !== null && target.cell !== undefined) {
    ctx.strokeStyle = COLORS.pendingTarget;
    ctx.setLineDash([4, 3]);
    const [tx, ty] = cellRect(map, side, target.cell[0], target.cell[1]);
    ctx.strokeRect(tx + 1, ty + 1, side - 2, side - 2);
    ctx.setLineDash([]);
  }

  if (state !== null) {
    for (const ped of state.peds) {
      const [px, py] = cellCenter(map, side, ped.cell[0], ped.cell[1]);
      const r = side * 0.32;
      ctx.fillStyle = !ped.active
        ? COLORS.pedInactive
        : ped.g_true ? COLORS.pedGazing : COLORS.pedNotGazing;
      ctx.beginPath();
      ctx.arc(px, py, r, 0, Math.PI * 2);
      ctx.fill();
      if (ped.latched) {
        ctx.strokeStyle = COLORS.latchRing;
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.arc(px, py, r + 3, 0, Math.PI * 2);
        ctx.stroke();
      }
      if (store.selectedPed === ped.id) {
        ctx.strokeStyle = COLORS.selection;
        ctx.setLineDash([3, 2]);
        ctx.lineWidth = 1;
        ctx.beginPath();
        ctx.arc(px, py, r + 6, 0, Math.PI * 2);
        ctx.stroke();
        ctx.setLineDash([]);
      }
      ctx.fillStyle = COLORS.hud;
      ctx.font = `${Math.max(9, side / 4)}px monospace`;
      ctx.fillText(String(ped.id), px + r + 2, py - r);
    }

    const [rx, ry] = cellCenter(map, side, state.robot.cell[0], state.robot.cell[1]);
    ctx.fillStyle = COLORS.robot;
    ctx.beginPath();
    ctx.arc(rx, ry, side * 0.38, 0, Math.PI * 2);
    ctx.fill();
    ctx.fillStyle = COLORS.hud;
    ctx.font = `${Math.max(9, side / 4)}px monospace`;
    ctx.fillText(state.robot.last_action, rx + side * 0.45, ry - side * 0.45);
  }

  ctx.fillStyle = COLORS.hud;
  ctx.font = `${HUD_LINE_PX - 2}px monospace`;
  const hud: string[] = [];
  hud.push(
    `${store.hello.scenario} ${store.hello.episode} seed=${store.hello.seed} ` +
    `conn=${store.connection}`);
  if (state !== null) {
    hud.push(
      `tick ${state.tick}/${store.hello.max_ticks} ` +
      `action=${state.robot.last_action} reward=${state.robot.last_reward.toFixed(2)}`);
    hud.push(
      `bounds [${state.bounds.lower.toFixed(2)}, ${state.bounds.upper.toFixed(2)}]`);
    if (state.events.length > 0) hud.push(`events: ${state.events.join(", ")}`);
  }
  if (store.metrics !== null) {
    const m = store.metrics;
    const clearance = m.min_clearance_m === null ? "-" : m.min_clearance_m.toFixed(2);
    hud.push(
      `return=${m.discounted_return.toFixed(2)} replans=${m.replans} ` +
      `fallbacks=${m.fallbacks} waits=${m.wait_events} clearance=${clearance}`);
  }
  if (store.pending.size > 0) {
    const kinds = [...store.pending.values()].map((c) => c.kind).join(", ");
    hud.push(`awaiting ack: ${kinds}`);
  }
  hud.forEach((line, k) => ctx.fillText(line, 8, h - 8 - HUD_LINE_PX * (hud.length - 1 - k)));

  if (store.episodeEnd !== null) {
    const end = store.episodeEnd;
    drawBanner(ctx, w, h, COLORS.bannerBg, COLORS.bannerText, [
      `episode over: ${end.outcome} after ${end.ticks} ticks`,
      `return=${end.discounted_return.toFixed(2)} ` +
      `replans=${end.replans} fallbacks=${end.fallbacks}`,
    ]);
  }

  store.toasts.slice(-3).forEach((t, k) => {
    ctx.fillStyle = t.kind === "error" ? COLORS.toastError : COLORS.toastInfo;
    ctx.fillText(t.text, 8, HUD_LINE_PX * (k + 1));
  });
}
