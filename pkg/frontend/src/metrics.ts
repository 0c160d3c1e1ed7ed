// Running metrics over a sliding time window, matching the batch evaluator:
// nearest-rank percentiles (sorted[min(ceil(p*n), n-1)], zero-based), errors
// as 3-D euclidean distance of target vs actual positions.

import { TelemetryFrame, Vec3 } from "./protocol.js";

export function nearestRank(values: number[], p: number): number {
  if (values.length === 0) throw new Error("percentile of empty sequence");
  if (p < 0 || p > 1) throw new Error("p must be in [0, 1]");
  const sorted = [...values].sort((a, b) => a - b);
  const idx = Math.min(Math.ceil(p * sorted.length), sorted.length - 1);
  return sorted[idx];
}

export function positionError(target: Vec3, actual: Vec3): number {
  const dx = target[0] - actual[0];
  const dy = target[1] - actual[1];
  const dz = target[2] - actual[2];
  return Math.sqrt(dx * dx + dy * dy + dz * dz);
}

interface Entry {
  t: number;
  error: number;
  latency: number | null;
}

export class RunningMetrics {
  private entries: Entry[] = [];
  drops = 0;

  constructor(readonly windowSeconds = 10.0) {}

  /** Feed one telemetry frame; frames without a target are counted but not paired. */
  push(frame: TelemetryFrame): void {
    this.drops = frame.drops;
    if (frame.target === null) return;
    const error = frame.error_m ?? positionError(frame.target.pos, frame.actual.pos);
    this.entries.push({ t: frame.t, error, latency: frame.e2e_latency_s });
    const cutoff = frame.t - this.windowSeconds;
    let firstLive = 0;
    while (firstLive < this.entries.length && this.entries[firstLive].t < cutoff) firstLive++;
    if (firstLive > 0) this.entries = this.entries.slice(firstLive);
  }

  get count(): number {
    return this.entries.length;
  }

  medianAte(): number | null {
    if (this.entries.length === 0) return null;
    return nearestRank(this.entries.map((e) => e.error), 0.5);
  }

  medianLatency(): number | null {
    const lats = this.entries.filter((e) => e.latency !== null).map((e) => e.latency as number);
    return lats.length ? nearestRank(lats, 0.5) : null;
  }
}
