/**
 * Browser entry point: wires the store, client, renderer, and controls.
 *
 * There is no simulation on this side. Every world change comes from server
 * frames; every control emits exactly one command and stays disabled until
 * the ack arrives or times out.
 */

import { ConsoleClient, SocketLike } from "./client.js";
import { cellAtPoint, render } from "./renderer.js";
import { ConsoleStore } from "./state.js";

function wrapWebSocket(url: string): SocketLike {
  const ws = new WebSocket(url);
  const like: SocketLike = {
    send: (data) => ws.send(data),
    close: () => ws.close(),
    onopen: null,
    onmessage: null,
    onclose: null,
  };
  ws.onopen = () => like.onopen?.();
  ws.onmessage = (ev) => like.onmessage?.(String(ev.data));
  ws.onclose = () => like.onclose?.();
  return like;
}

function must<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing #${id}`);
  return el as T;
}

const canvas = must<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d");
if (ctx === null) throw new Error("no 2d context");

const store = new ConsoleStore();
const params = new URLSearchParams(window.location.search);
const url = params.get("ws") ?? `ws://${window.location.hostname || "127.0.0.1"}:8710/ws`;
const client = new ConsoleClient({ url, connect: wrapWebSocket, store });

const pauseBtn = must<HTMLButtonElement>("pause");
const resumeBtn = must<HTMLButtonElement>("resume");
const stepBtn = must<HTMLButtonElement>("step");
const resetBtn = must<HTMLButtonElement>("reset");
const speedInput = must<HTMLInputElement>("speed");
const gazeBtn = must<HTMLButtonElement>("gaze");
const hint = must<HTMLSpanElement>("hint");

pauseBtn.onclick = () => client.pause();
resumeBtn.onclick = () => client.resume();
stepBtn.onclick = () => client.step();
resetBtn.onclick = () => client.reset();
speedInput.onchange = () => {
  const tps = Number(speedInput.value);
  if (Number.isFinite(tps) && tps > 0) client.setSpeed(tps);
};
gazeBtn.onclick = () => {
  const id = store.selectedPed;
  const ped = store.state?.peds.find((p) => p.id === id);
  if (id !== null && ped !== undefined) client.toggleGaze(id, !ped.g_true);
};

// click selects the pedestrian on that cell; drag from a selected pedestrian
// to a free cell emits set_ped_target on release
let dragFrom: number | null = null;

function pointedCell(ev: MouseEvent): [number, number] | null {
  if (store.map === null) return null;
  const rect = canvas.getBoundingClientRect();
  return cellAtPoint(
    store.map, canvas.width, canvas.height,
    ev.clientX - rect.left, ev.clientY - rect.top);
}

canvas.onmousedown = (ev) => {
  const cell = pointedCell(ev);
  if (cell === null || store.state === null) return;
  const ped = store.state.peds.find(
    (p) => p.active && p.cell[0] === cell[0] && p.cell[1] === cell[1]);
  if (ped !== undefined) {
    store.selectPed(ped.id);
    dragFrom = ped.id;
  } else {
    store.selectPed(null);
    dragFrom = null;
  }
};

canvas.onmouseup = (ev) => {
  const cell = pointedCell(ev);
  if (dragFrom !== null && cell !== null) {
    const ped = store.state?.peds.find((p) => p.id === dragFrom);
    if (ped !== undefined && (ped.cell[0] !== cell[0] || ped.cell[1] !== cell[1])) {
      client.setPedTarget(dragFrom, cell);
    }
  }
  dragFrom = null;
};

function draw(): void {
  try {
    render(store, ctx as never, canvas.width, canvas.height);
  } catch (err) {
    if (store.fatal === null) store.halt(String((err as Error).message));
  }
  pauseBtn.disabled = store.isPending("pause");
  resumeBtn.disabled = store.isPending("resume");
  stepBtn.disabled = store.isPending("step");
  resetBtn.disabled = store.isPending("reset");
  gazeBtn.disabled = store.selectedPed === null || store.isPending("toggle_gaze");
  hint.textContent = store.selectedPed === null
    ? "click a pedestrian to select it; drag it to retarget"
    : `ped ${store.selectedPed} selected`;
}

store.subscribe(() => requestAnimationFrame(draw));
draw();
client.start();
