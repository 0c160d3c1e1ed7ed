import { describe, expect, it } from "vitest";

import { ProtocolError, encodeArPose, parseTelemetry, validateArPose } from "../src/protocol.js";
import { shapePoint } from "../src/shapes.js";
import { RingTrail } from "../src/trace.js";

describe("RingTrail", () => {
  it("stays bounded and ordered", () => {
    const trail = new RingTrail(8);
    for (let k = 0; k < 100; k++) trail.push({ x: k, y: -k, error: null });
    expect(trail.length).toBe(8);
    const xs = trail.toArray().map((p) => p.x);
    expect(xs).toEqual([92, 93, 94, 95, 96, 97, 98, 99]);
  });

  it("clears", () => {
    const trail = new RingTrail(4);
    trail.push({ x: 1, y: 2, error: 0.1 });
    trail.clear();
    expect(trail.length).toBe(0);
    expect(trail.toArray()).toEqual([]);
  });
});

describe("pose message schema", () => {
  it("round trips", () => {
    const msg = { seq: 3, t_ms: 99, pos: [0.1, 0.2, -0.3] as [number, number, number], quat: [1, 0, 0, 0] as [number, number, number, number] };
    const parsed = validateArPose(JSON.parse(encodeArPose(msg)));
    expect(parsed).toEqual(msg);
  });

  it("rejects malformed messages", () => {
    const bad = [
      [],
      { seq: 1 },
      { seq: -1, t_ms: 0, pos: [0, 0, 0], quat: [1, 0, 0, 0] },
      { seq: 1, t_ms: 0, pos: [0, 0], quat: [1, 0, 0, 0] },
      { seq: 1, t_ms: 0, pos: [0, 0, NaN], quat: [1, 0, 0, 0] },
      { seq: 1, t_ms: 0, pos: [0, 0, 0], quat: [0, 0, 0, 0] },
    ];
    for (const b of bad) {
      expect(() => validateArPose(b)).toThrow(ProtocolError);
    }
  });

  it("parses telemetry and tolerates junk", () => {
    expect(parseTelemetry("{nope")).toBeNull();
    expect(parseTelemetry('{"t": 1}')).toBeNull();
    const ok = parseTelemetry(JSON.stringify({
      t: 1.0, tick: 200,
      actual: { pos: [0, 0, 0], quat: [1, 0, 0, 0] },
      target: null, target_t: null, target_seq: null,
      q: [], qdot: [], error_m: null, e2e_latency_s: null,
      ik_delay_s: 0, drops: 0, status: "ok",
    }));
    expect(ok?.tick).toBe(200);
  });
});

describe("shape overlays", () => {
  it("circle starts at (+r, 0) and passes (0, +r) at quarter turn", () => {
    expect(shapePoint({ kind: "circle", size: 0.1 }, 0)[0]).toBeCloseTo(0.1, 12);
    const q = shapePoint({ kind: "circle", size: 0.1 }, 0.25);
    expect(q[0]).toBeCloseTo(0, 12);
    expect(q[1]).toBeCloseTo(0.1, 12);
  });

  it("square traverses counterclockwise from the (+,+) corner", () => {
    const p0 = shapePoint({ kind: "square", size: 0.2 }, 0);
    expect(p0).toEqual([0.1, 0.1]);
    const p1 = shapePoint({ kind: "square", size: 0.2 }, 0.01);
    expect(p1[0]).toBeLessThan(p0[0]);
  });

  it("s-shape midpoint is the junction", () => {
    const mid = shapePoint({ kind: "s_shape", size: 0.1 }, 0.5);
    expect(mid[0]).toBeCloseTo(0, 9);
    expect(mid[1]).toBeCloseTo(0, 9);
  });
});
