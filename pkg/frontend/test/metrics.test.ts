import { describe, expect, it } from "vitest";

import { RunningMetrics, nearestRank, positionError } from "../src/metrics.js";
import { TelemetryFrame } from "../src/protocol.js";

function frame(t: number, error: number | null, latency: number | null = null, drops = 0): TelemetryFrame {
  return {
    t,
    tick: Math.round(t / 0.005),
    actual: { pos: [0, 0, 0], quat: [1, 0, 0, 0] },
    target: error === null ? null : { pos: [error, 0, 0], quat: [1, 0, 0, 0] },
    target_t: error === null ? null : t,
    target_seq: null,
    q: [],
    qdot: [],
    error_m: error,
    e2e_latency_s: latency,
    ik_delay_s: 0,
    drops,
    status: "ok",
  };
}

describe("nearestRank", () => {
  it("matches the frozen batch example: errors 3..12 mm give p50 = 8 mm", () => {
    const vals = [3, 4, 5, 6, 7, 8, 9, 10, 11, 12].map((v) => v / 1000);
    expect(nearestRank(vals, 0.5)).toBeCloseTo(0.008, 15);
    expect(nearestRank(vals, 0.95)).toBeCloseTo(0.012, 15);
  });

  it("constant sequence returns the constant", () => {
    expect(nearestRank([0.42, 0.42, 0.42], 0.5)).toBe(0.42);
  });

  it("agrees with a sort-and-index oracle", () => {
    for (let trial = 0; trial < 200; trial++) {
      const n = 1 + Math.floor(Math.random() * 40);
      const vals = Array.from({ length: n }, () => Math.random());
      const p = Math.random();
      const sorted = [...vals].sort((a, b) => a - b);
      const idx = Math.min(Math.ceil(p * n), n - 1);
      expect(nearestRank(vals, p)).toBe(sorted[idx]);
    }
  });
});

describe("RunningMetrics", () => {
  it("shows placeholder before the first pair", () => {
    const m = new RunningMetrics();
    expect(m.medianAte()).toBeNull();
    m.push(frame(0.0, null));
    expect(m.medianAte()).toBeNull();
  });

  it("constant offset input gives running median equal to the offset", () => {
    const m = new RunningMetrics();
    for (let k = 0; k < 100; k++) m.push(frame(k * 0.01, 0.0065, 0.012));
    expect(m.medianAte()).toBe(0.0065);
    expect(m.medianLatency()).toBe(0.012);
  });

  it("slides a 10 second window", () => {
    const m = new RunningMetrics(10.0);
    for (let k = 0; k < 500; k++) m.push(frame(k * 0.05, k < 250 ? 0.001 : 0.009));
    // t spans 25 s; only the last 10 s (all 0.009) remain
    expect(m.medianAte()).toBe(0.009);
    expect(m.count).toBeLessThanOrEqual(201);
  });

  it("tracks the drop counter from frames", () => {
    const m = new RunningMetrics();
    m.push(frame(0, 0.001, null, 7));
    expect(m.drops).toBe(7);
  });

  it("derives the error from positions when error_m is absent", () => {
    expect(positionError([0.03, 0, 0], [0, 0.04, 0])).toBeCloseTo(0.05, 15);
    const f = frame(0, 0.002);
    f.error_m = null;
    f.target = { pos: [0.003, 0, 0], quat: [1, 0, 0, 0] };
    const m = new RunningMetrics();
    m.push(f);
    expect(m.medianAte()).toBeCloseTo(0.003, 15);
  });
});
