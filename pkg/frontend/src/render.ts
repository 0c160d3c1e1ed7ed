// Canvas drawing: shape overlay, target/actual trails colored by error band,
// and the numeric HUD. Pure drawing; no network or input state.

import { WorkspaceMapping, robotPointToPixel } from "./mapping.js";
import { ShapeParams, shapeOutline } from "./shapes.js";
import { RingTrail } from "./trace.js";
import { Vec3 } from "./protocol.js";

export const BAND_LOW_MAX = 0.0075;
export const BAND_MID_MAX = 0.02;

export function bandColor(error: number | null): string {
  if (error === null) return "#8a8a8a";
  if (error < BAND_LOW_MAX) return "#3a7bd5"; // low: blue
  if (error < BAND_MID_MAX) return "#e0a73a"; // mid: amber
  return "#d5483a"; // high/saturated: red
}

export function planeToPixel(u: number, v: number, m: WorkspaceMapping, center: Vec3): [number, number] {
  return robotPointToPixel([center[0] + u, center[1] + v, center[2]], m);
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  m: WorkspaceMapping,
  shape: ShapeParams | null,
  shapeCenter: Vec3,
  targetTrail: RingTrail,
  actualTrail: RingTrail,
  connected: boolean,
): void {
  ctx.clearRect(0, 0, m.pxWidth, m.pxHeight);
  ctx.save();

  if (shape) {
    ctx.beginPath();
    for (const [i, [u, v]] of shapeOutline(shape).entries()) {
      const [x, y] = planeToPixel(u, v, m, shapeCenter);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.strokeStyle = "#bbbbbb";
    ctx.setLineDash([6, 4]);
    ctx.lineWidth = 1.5;
    ctx.stroke();
    ctx.setLineDash([]);
  }

  const target = targetTrail.toArray();
  ctx.beginPath();
  for (const [i, p] of target.entries()) {
    if (i === 0) ctx.moveTo(p.x, p.y);
    else ctx.lineTo(p.x, p.y);
  }
  ctx.strokeStyle = "#555555";
  ctx.lineWidth = 1;
  ctx.stroke();

  // actual trail segment-by-segment so each piece carries its error band
  const actual = actualTrail.toArray();
  for (let i = 1; i < actual.length; i++) {
    ctx.beginPath();
    ctx.moveTo(actual[i - 1].x, actual[i - 1].y);
    ctx.lineTo(actual[i].x, actual[i].y);
    ctx.strokeStyle = bandColor(actual[i].error);
    ctx.lineWidth = 2;
    ctx.stroke();
  }

  if (!connected) {
    ctx.fillStyle = "rgba(30, 30, 30, 0.55)";
    ctx.fillRect(0, m.pxHeight / 2 - 22, m.pxWidth, 44);
    ctx.fillStyle = "#ffffff";
    ctx.font = "16px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("disconnected - trails frozen", m.pxWidth / 2, m.pxHeight / 2 + 5);
  }
  ctx.restore();
}

export function formatHud(ate: number | null, latency: number | null, drops: number): string {
  const atePart = ate === null ? "ATE p50: —" : `ATE p50: ${(ate * 1000).toFixed(2)} mm`;
  const latPart = latency === null ? "latency p50: —" : `latency p50: ${(latency * 1000).toFixed(1)} ms`;
  return `${atePart} | ${latPart} | drops: ${drops}`;
}
