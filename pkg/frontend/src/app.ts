// Console wiring: pointer input -> pose websocket, telemetry websocket ->
// metrics + trails. Rendering runs on animation frames, decoupled from
// message receipt, so a slow paint can never block the socket.

import { DEFAULT_PLANE, PointerPoseSource, WorkspaceMapping, robotPointToPixel } from "./mapping.js";
import { RunningMetrics } from "./metrics.js";
import { encodeArPose, parseTelemetry, Vec3 } from "./protocol.js";
import { drawScene, formatHud } from "./render.js";
import { ShapeKind, ShapeParams } from "./shapes.js";
import { RingTrail } from "./trace.js";

const SEND_INTERVAL_MS = 12; // ~83 Hz pointer stream

function setup(): void {
  const canvas = document.getElementById("workspace") as HTMLCanvasElement;
  const hud = document.getElementById("hud") as HTMLElement;
  const status = document.getElementById("status") as HTMLElement;
  const shapeSelect = document.getElementById("shape") as HTMLSelectElement;
  const ctx = canvas.getContext("2d")!;

  const mapping: WorkspaceMapping = {
    pxWidth: canvas.width,
    pxHeight: canvas.height,
    plane: DEFAULT_PLANE,
  };
  const source = new PointerPoseSource(mapping);
  const metrics = new RunningMetrics(10.0);
  const targetTrail = new RingTrail(2048);
  const actualTrail = new RingTrail(2048);
  const shapeCenter: Vec3 = [DEFAULT_PLANE.centerX, DEFAULT_PLANE.centerY, DEFAULT_PLANE.height];

  let connected = false;
  let lastSend = 0;
  let pointerDown = false;

  const wsBase = `ws://${location.host}`;
  const poseWs = new WebSocket(`${wsBase}/pose`);
  const telemetryWs = new WebSocket(`${wsBase}/telemetry`);

  poseWs.onopen = () => {
    connected = true;
    status.textContent = "connected";
  };
  const onDown = () => {
    connected = false;
    status.textContent = "disconnected";
  };
  poseWs.onclose = onDown;
  poseWs.onerror = onDown;

  telemetryWs.onmessage = (ev) => {
    const frame = parseTelemetry(String(ev.data));
    if (frame === null) return; // malformed frame: skip, keep the socket
    metrics.push(frame);
    const [ax, ay] = robotPointToPixel(frame.actual.pos, mapping);
    actualTrail.push({ x: ax, y: ay, error: frame.error_m });
    if (frame.target) {
      const [tx, ty] = robotPointToPixel(frame.target.pos, mapping);
      targetTrail.push({ x: tx, y: ty, error: null });
    }
  };

  function currentShape(): ShapeParams | null {
    const kind = shapeSelect.value;
    if (kind === "none") return null;
    if (kind === "rectangle") return { kind, size: 0.16, width: 0.16, height: 0.1 };
    return { kind: kind as ShapeKind, size: kind === "square" ? 0.16 : 0.1 };
  }

  function sendPointer(ev: PointerEvent): void {
    const now = performance.now();
    if (!pointerDown || now - lastSend < SEND_INTERVAL_MS) return;
    if (poseWs.readyState !== WebSocket.OPEN) return;
    lastSend = now;
    const rect = canvas.getBoundingClientRect();
    const msg = source.fromPointer(ev.clientX - rect.left, ev.clientY - rect.top);
    poseWs.send(encodeArPose(msg));
  }

  canvas.addEventListener("pointerdown", (ev) => {
    pointerDown = true;
    canvas.setPointerCapture(ev.pointerId);
    sendPointer(ev);
  });
  canvas.addEventListener("pointermove", sendPointer);
  canvas.addEventListener("pointerup", () => {
    pointerDown = false;
  });

  function paint(): void {
    drawScene(ctx, mapping, currentShape(), shapeCenter, targetTrail, actualTrail, connected);
    hud.textContent = formatHud(metrics.medianAte(), metrics.medianLatency(), metrics.drops);
    requestAnimationFrame(paint);
  }
  requestAnimationFrame(paint);
}

window.addEventListener("DOMContentLoaded", setup);
