// Browser entry point: connect, render, relay.

import { buildFeedbackForm, buildSteering } from "./controls.js";
import { drawAltitudeGauge, drawMap } from "./render.js";
import { ConsoleSession } from "./session.js";
import type { FeedbackFormHandles } from "./controls.js";
import type { Ctx2D } from "./render.js";

function requireEl<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

const mapCanvas = requireEl<HTMLCanvasElement>("map");
const gaugeCanvas = requireEl<HTMLCanvasElement>("gauge");
const banner = requireEl<HTMLDivElement>("banner");
const statusLine = requireEl<HTMLDivElement>("status");
const queryPanel = requireEl<HTMLDivElement>("query");
const formMount = requireEl<HTMLDivElement>("form");
const steeringMount = requireEl<HTMLDivElement>("steering");

const params = new URLSearchParams(location.search);
const host = params.get("host") ?? location.hostname ?? "127.0.0.1";
const port = params.get("port") ?? "8750";
const role = params.get("role") ?? "operator";
const url = `ws://${host}:${port}/ws?role=${role}`;

let socket: WebSocket | null = null;
let form: FeedbackFormHandles | null = null;
let steering: ReturnType<typeof buildSteering> | null = null;

const session = new ConsoleSession(
  (text) => socket?.send(text),
  {
    onChange: refreshPanels,
    onQuery: (q) => {
      if (form) {
        form.setFromPrediction(q.predicted);
        form.setEnabled(session.isOperator);
      }
    },
    onError: (reason) => {
      flashBanner(`service: ${reason}`);
    },
  },
);

function connect(): void {
  banner.textContent = `connecting to ${url}`;
  banner.classList.remove("hidden");
  socket = new WebSocket(url);
  socket.onmessage = (ev) => {
    try {
      session.handleText(String(ev.data));
    } catch (e) {
      flashBanner(String(e));
    }
    if (session.hello && !form) {
      form = buildFeedbackForm(session, submitGuidance);
      formMount.replaceChildren(form.root);
      steering = buildSteering(session);
      steeringMount.replaceChildren(steering.root);
      banner.classList.add("hidden");
    }
  };
  socket.onclose = () => {
    session.markClosed();
    banner.textContent = "disconnected";
    banner.classList.remove("hidden");
  };
}

function submitGuidance(): void {
  const q = session.pendingQuery;
  if (!q || !form) return;
  const res = session.submitFeedback(
    q.query_id,
    form.readValues(),
    form.readConfidence(),
  );
  if (!res.ok) {
    flashBanner(`submission rejected: ${res.reason}`);
  }
  form.setEnabled(false);
}

let bannerTimer: number | undefined;
function flashBanner(text: string): void {
  banner.textContent = text;
  banner.classList.remove("hidden");
  window.clearTimeout(bannerTimer);
  bannerTimer = window.setTimeout(() => banner.classList.add("hidden"), 4000);
}

function refreshPanels(): void {
  steering?.refresh();
  const snap = session.snapshot;
  if (snap) {
    const state = snap.aborted
      ? "aborted"
      : snap.done
        ? snap.success
          ? "complete"
          : "finished"
        : snap.paused
          ? "paused"
          : "flying";
    statusLine.textContent =
      `${state} | tick ${snap.tick}` +
      ` | waypoint ${(snap.waypoint_index ?? 0) + 1}/${snap.n_waypoints ?? "?"}` +
      ` | queries left ${snap.budget}` +
      ` | violations ${snap.violations ?? 0}` +
      ` | role ${session.role ?? "?"}`;
  }
  const q = session.pendingQuery;
  if (q) {
    queryPanel.textContent =
      `guidance requested in "${q.env}"` +
      ` (query ${q.query_id}, spread ${q.trace.toFixed(3)})`;
    queryPanel.classList.remove("hidden");
  } else {
    queryPanel.classList.add("hidden");
    form?.setEnabled(false);
  }
}

function renderLoop(): void {
  const dpr = window.devicePixelRatio || 1;
  for (const canvas of [mapCanvas, gaugeCanvas]) {
    const w = canvas.clientWidth;
    const h = canvas.clientHeight;
    if (canvas.width !== Math.round(w * dpr)) canvas.width = Math.round(w * dpr);
    if (canvas.height !== Math.round(h * dpr)) canvas.height = Math.round(h * dpr);
  }
  const mctx = mapCanvas.getContext("2d");
  const gctx = gaugeCanvas.getContext("2d");
  if (mctx && gctx) {
    mctx.save();
    mctx.scale(dpr, dpr);
    drawMap(mctx as unknown as Ctx2D, session, mapCanvas.clientWidth, mapCanvas.clientHeight);
    mctx.restore();
    gctx.save();
    gctx.scale(dpr, dpr);
    drawAltitudeGauge(
      gctx as unknown as Ctx2D,
      session,
      gaugeCanvas.clientWidth,
      gaugeCanvas.clientHeight,
    );
    gctx.restore();
  }
  if (session.isStale()) {
    banner.textContent = "telemetry stale";
    banner.classList.remove("hidden");
  }
  window.requestAnimationFrame(renderLoop);
}

connect();
window.requestAnimationFrame(renderLoop);
