// Wire types shared with the server: pose messages out, telemetry frames in.

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // (w, x, y, z)

export interface ArPoseMsg {
  seq: number;
  t_ms: number;
  pos: Vec3; // AR device frame, Y up, meters
  quat: Quat;
}

export interface PoseRef {
  pos: Vec3;
  quat: Quat;
}

export interface TelemetryFrame {
  t: number;
  tick: number;
  actual: PoseRef;
  target: PoseRef | null;
  target_t: number | null;
  target_seq: number | null;
  q: number[];
  qdot: number[];
  error_m: number | null;
  e2e_latency_s: number | null;
  ik_delay_s: number;
  drops: number;
  status: string;
}

export class ProtocolError extends Error {}

function finiteNumbers(values: unknown[], what: string): number[] {
  const out = values.map(Number);
  if (out.some((v) => !Number.isFinite(v))) {
    throw new ProtocolError(`non-finite value in ${what}`);
  }
  return out;
}

export function validateArPose(obj: unknown): ArPoseMsg {
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new ProtocolError("pose message must be an object");
  }
  const rec = obj as Record<string, unknown>;
  for (const key of ["seq", "t_ms", "pos", "quat"]) {
    if (!(key in rec)) throw new ProtocolError(`missing field ${key}`);
  }
  const seq = Number(rec.seq);
  const tMs = Number(rec.t_ms);
  if (!Number.isInteger(seq) || seq < 0) throw new ProtocolError("seq must be a non-negative integer");
  if (!Number.isFinite(tMs) || tMs < 0) throw new ProtocolError("t_ms must be non-negative");
  const pos = rec.pos as unknown[];
  const quat = rec.quat as unknown[];
  if (!Array.isArray(pos) || pos.length !== 3) throw new ProtocolError("pos must have 3 components");
  if (!Array.isArray(quat) || quat.length !== 4) throw new ProtocolError("quat must have 4 components");
  const p = finiteNumbers(pos, "pos") as Vec3;
  const q = finiteNumbers(quat, "quat") as Quat;
  const norm = Math.hypot(q[0], q[1], q[2], q[3]);
  if (norm < 1e-6) throw new ProtocolError("degenerate quaternion");
  return { seq, t_ms: tMs, pos: p, quat: q };
}

export function encodeArPose(msg: ArPoseMsg): string {
  validateArPose(msg);
  return JSON.stringify({ seq: msg.seq, t_ms: msg.t_ms, pos: msg.pos, quat: msg.quat });
}

export function parseTelemetry(text: string): TelemetryFrame | null {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const rec = obj as Record<string, unknown>;
  if (typeof rec.t !== "number" || typeof rec.tick !== "number" || !rec.actual) return null;
  return rec as unknown as TelemetryFrame;
}
