import { describe, expect, it } from "vitest";

import { Client } from "../src/api.js";
import { Quat, quatFromAxisAngle, quatMultiply, quatNormalize } from "../src/math.js";
import { dialDegrees, dialText } from "../src/render.js";
import { FakeService, Q_POS } from "./fake_service.js";

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

describe("remaining-angle dial", () => {
  it("matches the service's guidance angle within 0.1 degrees on 20 scripted poses", async () => {
    const service = new FakeService();
    const client = new Client("", service.fetch);
    const rand = mulberry(11);
    for (let k = 0; k < 20; k++) {
      const offsetDeg = k * 2.5;
      const axis: [number, number, number] = [rand() - 0.5, rand() - 0.5, rand() - 0.5];
      const spin = quatFromAxisAngle(axis, (offsetDeg * Math.PI) / 180);
      const q: Quat = quatNormalize(quatMultiply(Q_POS, spin));
      const guidance = await client.guidance(
        { q: Array.from(q), delta: [0, 0, 0] },
        "tvp",
      );
      expect(Math.abs(dialDegrees(guidance.angle) - offsetDeg)).toBeLessThan(0.1);
    }
  });

  it("reads 0.0 degrees exactly on the plane", async () => {
    const service = new FakeService();
    const client = new Client("", service.fetch);
    const guidance = await client.guidance(
      { q: Array.from(Q_POS), delta: [0, 0, 0] },
      "tvp",
    );
    expect(dialText(guidance.angle)).toBe("0.0°");
  });

  it("formats radians as one-decimal degrees", () => {
    expect(dialText(Math.PI / 2)).toBe("90.0°");
    expect(dialText(0.1745329)).toBe("10.0°");
  });
});
