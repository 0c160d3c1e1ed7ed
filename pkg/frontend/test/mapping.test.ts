import { describe, expect, it } from "vitest";

import {
  DEFAULT_PLANE,
  PointerPoseSource,
  WorkspaceMapping,
  arToRobot,
  pointerToRobotPoint,
  robotPointToPixel,
  robotToAr,
} from "../src/mapping.js";
import { validateArPose } from "../src/protocol.js";

const mapping: WorkspaceMapping = { pxWidth: 720, pxHeight: 600, plane: DEFAULT_PLANE };

// the server's fixed homogenization: -90 degrees about Y applied to positions
function homogenizeOracle(ar: [number, number, number]): [number, number, number] {
  return [-ar[2], ar[1], ar[0]];
}

describe("pointer mapping", () => {
  it("maps the rectangle center to the plane center", () => {
    const p = pointerToRobotPoint(360, 300, mapping);
    expect(p[0]).toBeCloseTo(DEFAULT_PLANE.centerX, 12);
    expect(p[1]).toBeCloseTo(DEFAULT_PLANE.centerY, 12);
    expect(p[2]).toBeCloseTo(DEFAULT_PLANE.height, 12);
  });

  it("maps corners to plane corners", () => {
    const tl = pointerToRobotPoint(0, 0, mapping); // top-left: forward-left
    expect(tl[0]).toBeCloseTo(DEFAULT_PLANE.centerX + DEFAULT_PLANE.heightM / 2, 12);
    expect(tl[1]).toBeCloseTo(DEFAULT_PLANE.centerY + DEFAULT_PLANE.widthM / 2, 12);
    const br = pointerToRobotPoint(720, 600, mapping);
    expect(br[0]).toBeCloseTo(DEFAULT_PLANE.centerX - DEFAULT_PLANE.heightM / 2, 12);
    expect(br[1]).toBeCloseTo(DEFAULT_PLANE.centerY - DEFAULT_PLANE.widthM / 2, 12);
  });

  it("is linear: pixel distances scale to meters", () => {
    const a = pointerToRobotPoint(100, 300, mapping);
    const b = pointerToRobotPoint(200, 300, mapping);
    const scale = DEFAULT_PLANE.widthM / 720;
    expect(Math.hypot(a[0] - b[0], a[1] - b[1])).toBeCloseTo(100 * scale, 12);
  });

  it("clamps out-of-bounds pointers to the edge", () => {
    const inside = pointerToRobotPoint(720, 300, mapping);
    const outside = pointerToRobotPoint(900, 300, mapping);
    expect(outside).toEqual(inside);
  });

  it("pixel round trip inverts", () => {
    const p = pointerToRobotPoint(123, 456, mapping);
    const [u, v] = robotPointToPixel(p, mapping);
    expect(u).toBeCloseTo(123, 9);
    expect(v).toBeCloseTo(456, 9);
  });

  it("ar frame conversion inverts the server homogenization", () => {
    const robot: [number, number, number] = [0.3, -0.1, 0.5];
    const ar = robotToAr(robot);
    expect(homogenizeOracle(ar)).toEqual(robot);
    expect(arToRobot(ar)).toEqual(robot);
  });
});

describe("pointer pose source", () => {
  it("stamps strictly increasing seq and valid messages", () => {
    const src = new PointerPoseSource(mapping);
    let prevSeq = 0;
    for (let k = 0; k < 20; k++) {
      const msg = src.fromPointer(10 * k, 5 * k, 1000 + k * 10);
      const checked = validateArPose(msg);
      expect(checked.seq).toBeGreaterThan(prevSeq);
      prevSeq = checked.seq;
    }
  });
});
