/** Top-down scene view, computed as data.
 *
 * sceneDrawOps turns one state payload into an ordered list of drawing
 * primitives (deterministic, unit-testable); renderSceneView executes that
 * list on a canvas context. World frame: x right, y up, meters; the canvas
 * y axis points down, so worldToCanvas flips it.
 */

import { AreaSummary, StatePayload } from "./protocol.js";

export interface Viewport {
  width: number;
  height: number;
  worldHalf: number; // world [-worldHalf, worldHalf] fills the canvas
}

export type DrawOp =
  | { op: "clear"; color: string }
  | { op: "circle"; x: number; y: number; r: number; color: string; fill: boolean }
  | { op: "poly"; points: [number, number][]; color: string; fill: boolean }
  | { op: "line"; from: [number, number]; to: [number, number]; color: string; width: number }
  | { op: "text"; x: number; y: number; text: string; color: string };

export const DEFAULT_VIEWPORT: Viewport = { width: 480, height: 480, worldHalf: 3.2 };

// Drawn chassis footprint (m); display-only, not the collision model.
export const FOOTPRINT = { length: 0.7, width: 0.58 };
const HEADING_ARROW = 0.55;

const COLORS = {
  background: "#16181d",
  area: "#3b4252",
  areaLabel: "#8a93a5",
  footprint: "#4c7dd0",
  heading: "#dce3ee",
  object: "#b8863b",
  attached: "#4fd07d",
  ee: "#e4556f",
};

export function worldToCanvas(v: Viewport, wx: number, wy: number): [number, number] {
  const cx = (wx / (2 * v.worldHalf) + 0.5) * v.width;
  const cy = (0.5 - wy / (2 * v.worldHalf)) * v.height;
  return [cx, cy];
}

function scale(v: Viewport, meters: number): number {
  return (meters / (2 * v.worldHalf)) * v.width;
}

function footprintPoly(v: Viewport, x: number, y: number, yaw: number): [number, number][] {
  const c = Math.cos(yaw);
  const s = Math.sin(yaw);
  const hl = FOOTPRINT.length / 2;
  const hw = FOOTPRINT.width / 2;
  const corners: [number, number][] = [
    [hl, hw],
    [hl, -hw],
    [-hl, -hw],
    [-hl, hw],
  ];
  return corners.map(([bx, by]) => worldToCanvas(v, x + c * bx - s * by, y + s * bx + c * by));
}

export function sceneDrawOps(
  state: StatePayload | null,
  areas: AreaSummary[],
  v: Viewport = DEFAULT_VIEWPORT,
): DrawOp[] {
  const ops: DrawOp[] = [{ op: "clear", color: COLORS.background }];

  for (const area of areas) {
    const [ax, ay] = worldToCanvas(v, area.x, area.y);
    ops.push({ op: "circle", x: ax, y: ay, r: scale(v, 0.35), color: COLORS.area, fill: false });
    ops.push({ op: "text", x: ax, y: ay - scale(v, 0.45), text: area.name, color: COLORS.areaLabel });
  }

  if (state === null) {
    return ops;
  }

  const attached = new Set(state.attached);
  for (const [id, pos] of Object.entries(state.objects)) {
    const [ox, oy] = worldToCanvas(v, pos[0], pos[1]);
    ops.push({
      op: "circle",
      x: ox,
      y: oy,
      r: scale(v, attached.has(id) ? 0.09 : 0.06),
      color: attached.has(id) ? COLORS.attached : COLORS.object,
      fill: true,
    });
  }

  const { x, y, yaw } = state.base;
  ops.push({ op: "poly", points: footprintPoly(v, x, y, yaw), color: COLORS.footprint, fill: true });
  ops.push({
    op: "line",
    from: worldToCanvas(v, x, y),
    to: worldToCanvas(v, x + HEADING_ARROW * Math.cos(yaw), y + HEADING_ARROW * Math.sin(yaw)),
    color: COLORS.heading,
    width: 2,
  });

  const [ex, ey] = worldToCanvas(v, state.ee.position[0], state.ee.position[1]);
  ops.push({ op: "circle", x: ex, y: ey, r: scale(v, 0.05), color: COLORS.ee, fill: false });
  ops.push({
    op: "line",
    from: [ex - 4, ey],
    to: [ex + 4, ey],
    color: COLORS.ee,
    width: 1,
  });

  return ops;
}

/** Structural subset of CanvasRenderingContext2D so tests can stub it. */
export interface CanvasLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  textAlign: CanvasTextAlign;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

export function renderSceneView(ctx: CanvasLike, ops: DrawOp[], v: Viewport = DEFAULT_VIEWPORT): void {
  for (const op of ops) {
    switch (op.op) {
      case "clear":
        ctx.fillStyle = op.color;
        ctx.fillRect(0, 0, v.width, v.height);
        break;
      case "circle":
        ctx.beginPath();
        ctx.arc(op.x, op.y, op.r, 0, Math.PI * 2);
        if (op.fill) {
          ctx.fillStyle = op.color;
          ctx.fill();
        } else {
          ctx.strokeStyle = op.color;
          ctx.lineWidth = 1.5;
          ctx.stroke();
        }
        break;
      case "poly":
        ctx.beginPath();
        ctx.moveTo(op.points[0][0], op.points[0][1]);
        for (const [px, py] of op.points.slice(1)) {
          ctx.lineTo(px, py);
        }
        ctx.closePath();
        if (op.fill) {
          ctx.fillStyle = op.color;
          ctx.fill();
        } else {
          ctx.strokeStyle = op.color;
          ctx.stroke();
        }
        break;
      case "line":
        ctx.beginPath();
        ctx.moveTo(op.from[0], op.from[1]);
        ctx.lineTo(op.to[0], op.to[1]);
        ctx.strokeStyle = op.color;
        ctx.lineWidth = op.width;
        ctx.stroke();
        break;
      case "text":
        ctx.fillStyle = op.color;
        ctx.font = "11px sans-serif";
        ctx.textAlign = "center";
        ctx.fillText(op.text, op.x, op.y);
        break;
    }
  }
}
