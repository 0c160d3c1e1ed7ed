// Pointer-to-pose mapping: an affine map from the on-screen workspace
// rectangle onto a horizontal robot-plane rectangle at fixed height. Poses
// leave in the AR device frame (Y up) so the server homogenization path is
// exercised exactly as it would be by a phone client.

import { ArPoseMsg, Quat, Vec3 } from "./protocol.js";

// Defaults match the shipped 6R chain: the plane is centered on the home
// tool position and the fixed orientation homogenizes to the home tool
// orientation.
export const DEFAULT_PLANE = {
  centerX: 0.33752894300593544,
  centerY: 0.0,
  height: 0.5465349942078663,
  widthM: 0.24,
  heightM: 0.2,
};

// conj(Q_fix) ⊗ home orientation: what a client must send so the server
// side (Q_fix ⊗ q) lands on the home tool orientation
export const DEFAULT_AR_QUAT: Quat = [0.159711272, 0, 0.98716377, 0];

export interface WorkspaceMapping {
  pxWidth: number; // workspace rectangle, pixels
  pxHeight: number;
  plane: typeof DEFAULT_PLANE;
}

export function clampToRect(u: number, v: number, m: WorkspaceMapping): [number, number] {
  return [Math.min(Math.max(u, 0), m.pxWidth), Math.min(Math.max(v, 0), m.pxHeight)];
}

/** Pixel coordinates (origin top-left) to a robot-frame point on the plane. */
export function pointerToRobotPoint(u: number, v: number, m: WorkspaceMapping): Vec3 {
  const [cu, cv] = clampToRect(u, v, m);
  const x = m.plane.centerX + (cv / m.pxHeight - 0.5) * -m.plane.heightM;
  const y = m.plane.centerY + (cu / m.pxWidth - 0.5) * -m.plane.widthM;
  return [x, y, m.plane.height];
}

/** Invert the robot-plane point back to pixels (for drawing overlays). */
export function robotPointToPixel(p: Vec3, m: WorkspaceMapping): [number, number] {
  const cv = ((p[0] - m.plane.centerX) / -m.plane.heightM + 0.5) * m.pxHeight;
  const cu = ((p[1] - m.plane.centerY) / -m.plane.widthM + 0.5) * m.pxWidth;
  return [cu, cv];
}

/**
 * Robot frame (Z up) to AR device frame (Y up): the inverse of the server's
 * fixed homogenization rotation (-90 degrees about Y), so
 * robot (X, Y, Z) == (-ar_z, ar_y, ar_x).
 */
export function robotToAr(p: Vec3): Vec3 {
  return [p[2], p[1], -p[0]];
}

export function arToRobot(p: Vec3): Vec3 {
  return [-p[2], p[1], p[0]];
}

/** Stamps outgoing messages with monotonic sequence numbers and timestamps. */
export class PointerPoseSource {
  private seq = 0;
  private readonly t0 = Date.now();

  constructor(
    readonly mapping: WorkspaceMapping,
    readonly arQuat: Quat = DEFAULT_AR_QUAT,
  ) {}

  fromPointer(u: number, v: number, nowMs?: number): ArPoseMsg {
    const robot = pointerToRobotPoint(u, v, this.mapping);
    return this.fromRobotPoint(robot, nowMs);
  }

  fromRobotPoint(robot: Vec3, nowMs?: number): ArPoseMsg {
    this.seq += 1;
    return {
      seq: this.seq,
      t_ms: Math.max(0, Math.round((nowMs ?? Date.now()) - this.t0)),
      pos: robotToAr(robot),
      quat: this.arQuat,
    };
  }
}
