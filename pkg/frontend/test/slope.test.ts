import { describe, expect, it } from "vitest";
import { loglogSlope } from "../src/slope.js";

describe("loglogSlope", () => {
  it("recovers an exact power law", () => {
    const x = [10, 100, 1000];
    const y = x.map((v) => Math.pow(v, -0.5));
    expect(loglogSlope(x, y)).toBeCloseTo(-0.5, 12);
  });

  it("matches a hand-computed two-point slope", () => {
    // slope = log(y2/y1) / log(x2/x1)
    expect(loglogSlope([30, 1000], [0.2, 0.05]))
      .toBeCloseTo(Math.log(0.05 / 0.2) / Math.log(1000 / 30), 12);
  });

  it("rejects degenerate input", () => {
    expect(() => loglogSlope([1], [1])).toThrowError();
    expect(() => loglogSlope([1, 2], [0, 1])).toThrowError();
  });
});
