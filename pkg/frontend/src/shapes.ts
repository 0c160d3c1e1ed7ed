// Target-shape overlays: the same parametrizations the autopilot traces
// (circle, square/rectangle counterclockwise from the (+,+) corner, S as two
// tangent semicircles), sampled in plane coordinates for drawing.

export type ShapeKind = "circle" | "square" | "rectangle" | "s_shape";

export interface ShapeParams {
  kind: ShapeKind;
  size: number; // radius / side / S scale
  width?: number; // rectangle
  height?: number;
}

/** Point on the shape outline at parameter tau in [0, 1), in plane (u, v) meters. */
export function shapePoint(shape: ShapeParams, tau: number): [number, number] {
  tau -= Math.floor(tau);
  if (shape.kind === "circle") {
    const a = 2 * Math.PI * tau;
    return [shape.size * Math.cos(a), shape.size * Math.sin(a)];
  }
  if (shape.kind === "square" || shape.kind === "rectangle") {
    const w = shape.kind === "square" ? shape.size : shape.width ?? shape.size;
    const h = shape.kind === "square" ? shape.size : shape.height ?? shape.size;
    const corners: [number, number][] = [
      [w / 2, h / 2],
      [-w / 2, h / 2],
      [-w / 2, -h / 2],
      [w / 2, -h / 2],
    ];
    let arc = tau * 2 * (w + h);
    for (let i = 0; i < 4; i++) {
      const [ax, ay] = corners[i];
      const [bx, by] = corners[(i + 1) % 4];
      const seg = Math.hypot(bx - ax, by - ay);
      if (arc <= seg || i === 3) {
        const f = arc / seg;
        return [ax + f * (bx - ax), ay + f * (by - ay)];
      }
      arc -= seg;
    }
  }
  // s_shape: two tangent semicircles of radius size/2, bottom to top
  const r = shape.size / 2;
  const s = tau * Math.PI * 2 * r;
  if (s <= Math.PI * r) {
    const theta = -Math.PI / 2 + s / r;
    return [r * Math.cos(theta), -r + r * Math.sin(theta)];
  }
  const theta = -Math.PI / 2 - (s - Math.PI * r) / r;
  return [r * Math.cos(theta), r + r * Math.sin(theta)];
}

export function shapeOutline(shape: ShapeParams, n = 256): [number, number][] {
  const pts: [number, number][] = [];
  for (let k = 0; k <= n; k++) pts.push(shapePoint(shape, k / n));
  return pts;
}
