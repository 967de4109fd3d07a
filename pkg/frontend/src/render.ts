// Top-down map and altitude gauge.
//
// Rendering goes through Ctx2D, the subset of CanvasRenderingContext2D the
// console uses, so tests can record draw calls without a DOM.

import { fitView, polytopeSliceAt, toScreen } from "./geometry.js";
import type { ViewTransform } from "./geometry.js";
import type { ConsoleSession } from "./session.js";
import type { BoxDict } from "./types.js";

export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  globalAlpha: number;
  font: string;
  textAlign: CanvasTextAlign;
  textBaseline: CanvasTextBaseline;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
  save(): void;
  restore(): void;
}

const COLORS = {
  background: "#10141a",
  bounds: "#2b3442",
  obstacle: "#4b5563",
  regionLabel: "#6b7280",
  safeRegion: "rgba(52, 211, 153, 0.18)",
  safeRegionEdge: "#34d399",
  robot: "#60a5fa",
  velocity: "#93c5fd",
  centroid: "#fbbf24",
  goal: "#f87171",
  waypoint: "#facc15",
  gauge: "#1f2937",
  gaugeFill: "#60a5fa",
  text: "#d1d5db",
};

function boxRect(v: ViewTransform, box: BoxDict): [number, number, number, number] {
  const [x0, y0] = toScreen(v, box.min[0], box.max[1]);
  const [x1, y1] = toScreen(v, box.max[0], box.min[1]);
  return [x0, y0, x1 - x0, y1 - y0];
}

export function drawMap(
  ctx: Ctx2D,
  session: ConsoleSession,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, width, height);
  const scenario = session.hello?.scenario;
  if (!scenario) return;

  const b = scenario.bounds;
  const v = fitView(b.min[0], b.min[1], b.max[0], b.max[1], width, height);

  ctx.strokeStyle = COLORS.bounds;
  ctx.lineWidth = 1.5;
  const [bx, by, bw, bh] = boxRect(v, b);
  ctx.strokeRect(bx, by, bw, bh);

  ctx.fillStyle = COLORS.regionLabel;
  ctx.font = "11px system-ui, sans-serif";
  ctx.textAlign = "center";
  ctx.textBaseline = "middle";
  for (const region of scenario.regions) {
    const cx = (region.box.min[0] + region.box.max[0]) / 2;
    const cy = (region.box.min[1] + region.box.max[1]) / 2;
    const [sx, sy] = toScreen(v, cx, cy);
    ctx.fillText(region.label, sx, sy);
  }

  ctx.fillStyle = COLORS.obstacle;
  for (const ob of scenario.obstacles) {
    const [x, y, w, h] = boxRect(v, ob);
    ctx.fillRect(x, y, w, h);
  }

  // safe region polygon at the team's flying height
  const snap = session.snapshot;
  const poly = session.region?.polytope;
  if (poly && snap) {
    const slice = polytopeSliceAt(poly.A, poly.b, snap.centroid[2]);
    if (slice.length >= 3) {
      ctx.beginPath();
      slice.forEach((p, i) => {
        const [sx, sy] = toScreen(v, p.x, p.y);
        if (i === 0) ctx.moveTo(sx, sy);
        else ctx.lineTo(sx, sy);
      });
      ctx.closePath();
      ctx.fillStyle = COLORS.safeRegion;
      ctx.fill();
      ctx.strokeStyle = COLORS.safeRegionEdge;
      ctx.lineWidth = 1;
      ctx.stroke();
    }
  }

  const [gx, gy] = toScreen(v, scenario.goal[0], scenario.goal[1]);
  ctx.fillStyle = COLORS.goal;
  ctx.beginPath();
  ctx.arc(gx, gy, 5, 0, 2 * Math.PI);
  ctx.fill();

  if (!snap) return;

  const [wx, wy] = toScreen(v, snap.waypoint[0], snap.waypoint[1]);
  ctx.strokeStyle = COLORS.waypoint;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.arc(wx, wy, 6, 0, 2 * Math.PI);
  ctx.stroke();

  ctx.fillStyle = COLORS.centroid;
  const [cx, cy] = toScreen(v, snap.centroid[0], snap.centroid[1]);
  ctx.beginPath();
  ctx.arc(cx, cy, 3, 0, 2 * Math.PI);
  ctx.fill();

  for (const robot of snap.robots) {
    const [rx, ry] = toScreen(v, robot.position[0], robot.position[1]);
    ctx.fillStyle = COLORS.robot;
    ctx.beginPath();
    ctx.arc(rx, ry, 4, 0, 2 * Math.PI);
    ctx.fill();
    // short velocity whisker
    const speed = Math.hypot(robot.velocity[0], robot.velocity[1]);
    if (speed > 1e-3) {
      const k = (v.scale * 0.6) / speed;
      ctx.strokeStyle = COLORS.velocity;
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.moveTo(rx, ry);
      const [ex, ey] = toScreen(
        v,
        robot.position[0] + robot.velocity[0] * k,
        robot.position[1] + robot.velocity[1] * k,
      );
      ctx.lineTo(ex, ey);
      ctx.stroke();
    }
  }
}

/** Vertical altitude gauge: bounds ceiling, robot z marks, target height. */
export function drawAltitudeGauge(
  ctx: Ctx2D,
  session: ConsoleSession,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = COLORS.gauge;
  ctx.fillRect(0, 0, width, height);
  const scenario = session.hello?.scenario;
  const snap = session.snapshot;
  if (!scenario) return;
  const zMax = scenario.bounds.max[2];
  const pad = 10;
  const yOf = (z: number) => height - pad - (z / zMax) * (height - 2 * pad);

  ctx.strokeStyle = COLORS.bounds;
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(width / 2, yOf(0));
  ctx.lineTo(width / 2, yOf(zMax));
  ctx.stroke();

  ctx.fillStyle = COLORS.text;
  ctx.font = "10px system-ui, sans-serif";
  ctx.textAlign = "left";
  ctx.textBaseline = "middle";
  ctx.fillText(`${zMax.toFixed(0)}m`, width / 2 + 6, yOf(zMax));
  ctx.fillText("0", width / 2 + 6, yOf(0));

  if (!snap) return;
  const target = snap.preferences.h_height;
  ctx.strokeStyle = COLORS.waypoint;
  ctx.beginPath();
  ctx.moveTo(width / 2 - 8, yOf(target));
  ctx.lineTo(width / 2 + 8, yOf(target));
  ctx.stroke();

  ctx.fillStyle = COLORS.robot;
  for (const robot of snap.robots) {
    ctx.beginPath();
    ctx.arc(width / 2, yOf(robot.position[2]), 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}
