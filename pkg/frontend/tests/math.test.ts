import { describe, expect, it } from "vitest";

import {
  DEG,
  Quat,
  eulerToQuat,
  quatAngleDeg,
  quatFromAxisAngle,
  quatMultiply,
  quatNormalize,
  quatToEuler,
  rotateVector,
} from "../src/math.js";

function mulberry(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a += 0x6d2b79f5;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("quaternion basics", () => {
  it("multiplication preserves unit norm", () => {
    const rand = mulberry(1);
    for (let i = 0; i < 200; i++) {
      const a = quatNormalize([rand() - 0.5, rand() - 0.5, rand() - 0.5, rand() - 0.5]);
      const b = quatNormalize([rand() - 0.5, rand() - 0.5, rand() - 0.5, rand() - 0.5]);
      const c = quatMultiply(a, b);
      expect(Math.hypot(c[0], c[1], c[2], c[3])).toBeCloseTo(1, 12);
    }
  });

  it("axis-angle rotation moves a vector by the stated angle", () => {
    const q = quatFromAxisAngle([0, 0, 1], 90 * DEG);
    const v = rotateVector(q, [1, 0, 0]);
    expect(v[0]).toBeCloseTo(0, 12);
    expect(v[1]).toBeCloseTo(1, 12);
    expect(v[2]).toBeCloseTo(0, 12);
  });

  it("angle between q and -q is zero", () => {
    const q = eulerToQuat({ yawDeg: 33, pitchDeg: -12, rollDeg: 71 });
    const neg: Quat = [-q[0], -q[1], -q[2], -q[3]];
    expect(quatAngleDeg(q, neg)).toBeCloseTo(0, 9);
  });
});

describe("euler round trips", () => {
  it("slider -> quaternion -> slider stays within 0.01 degrees", () => {
    const rand = mulberry(7);
    for (let i = 0; i < 100; i++) {
      const e = {
        yawDeg: (rand() - 0.5) * 350,
        pitchDeg: (rand() - 0.5) * 170,
        rollDeg: (rand() - 0.5) * 350,
      };
      const back = quatToEuler(eulerToQuat(e));
      expect(quatAngleDeg(eulerToQuat(e), eulerToQuat(back))).toBeLessThan(0.01);
    }
  });

  it("100 repeated conversion cycles accumulate under 0.1 degrees", () => {
    let e = { yawDeg: 47.3, pitchDeg: -28.6, rollDeg: 103.9 };
    const start = eulerToQuat(e);
    for (let i = 0; i < 100; i++) e = quatToEuler(eulerToQuat(e));
    expect(quatAngleDeg(start, eulerToQuat(e))).toBeLessThan(0.1);
  });
});
