// Bounded trails: fixed-capacity ring so a long session cannot grow memory.

export interface TrailPoint {
  x: number;
  y: number;
  error: number | null;
}

export class RingTrail {
  private buf: TrailPoint[];
  private head = 0;
  private n = 0;

  constructor(readonly capacity = 2048) {
    if (capacity < 1) throw new Error("capacity must be >= 1");
    this.buf = new Array(capacity);
  }

  push(p: TrailPoint): void {
    this.buf[this.head] = p;
    this.head = (this.head + 1) % this.capacity;
    if (this.n < this.capacity) this.n += 1;
  }

  get length(): number {
    return this.n;
  }

  /** Oldest to newest. */
  toArray(): TrailPoint[] {
    const out: TrailPoint[] = new Array(this.n);
    const start = (this.head - this.n + this.capacity) % this.capacity;
    for (let i = 0; i < this.n; i++) {
      out[i] = this.buf[(start + i) % this.capacity];
    }
    return out;
  }

  clear(): void {
    this.head = 0;
    this.n = 0;
  }
}
