import { describe, expect, it } from "vitest";

import { classifyClick, fitTransform, pixelToShape, pointInPolygon, shapeToPixel } from "../src/view.js";

const SQUARE: [number, number][] = [
  [0.2, 0.2],
  [0.8, 0.2],
  [0.8, 0.8],
  [0.2, 0.8],
];

describe("coordinate mapping", () => {
  it("maps the canvas center of a centered square to (0.5, 0.5)", () => {
    const t = fitTransform(480, 480);
    const { x, y } = pixelToShape(t, 240, 240);
    expect(x).toBeCloseTo(0.5, 6);
    expect(y).toBeCloseTo(0.5, 6);
  });

  it("round-trips shape -> pixel -> shape", () => {
    const t = fitTransform(640, 420);
    for (const [x, y] of [[0.1, 0.9], [0.5, 0.5], [0.73, 0.21]] as const) {
      const { px, py } = shapeToPixel(t, x, y);
      const back = pixelToShape(t, px, py);
      expect(back.x).toBeCloseTo(x, 9);
      expect(back.y).toBeCloseTo(y, 9);
    }
  });

  it("keeps the marker on the same shape coordinate across a resize", () => {
    const before = fitTransform(480, 480);
    const after = fitTransform(920, 600);
    const marker = { x: 0.37, y: 0.64 };
    // marker is stored in shape coordinates; its pixel position moves with
    // the transform but maps back to the same shape point
    const p1 = shapeToPixel(before, marker.x, marker.y);
    const p2 = shapeToPixel(after, marker.x, marker.y);
    expect(p1).not.toEqual(p2);
    const r1 = pixelToShape(before, p1.px, p1.py);
    const r2 = pixelToShape(after, p2.px, p2.py);
    expect(r1.x).toBeCloseTo(r2.x, 9);
    expect(r1.y).toBeCloseTo(r2.y, 9);
  });

  it("flips the y axis (canvas y grows downward)", () => {
    const t = fitTransform(480, 480);
    const low = shapeToPixel(t, 0.5, 0.1);
    const high = shapeToPixel(t, 0.5, 0.9);
    expect(high.py).toBeLessThan(low.py);
  });
});

describe("pointInPolygon", () => {
  it("accepts interior, boundary and vertex points", () => {
    expect(pointInPolygon(SQUARE, 0.5, 0.5)).toBe(true);
    expect(pointInPolygon(SQUARE, 0.2, 0.5)).toBe(true);
    expect(pointInPolygon(SQUARE, 0.2, 0.2)).toBe(true);
  });

  it("rejects exterior points", () => {
    expect(pointInPolygon(SQUARE, 0.1, 0.5)).toBe(false);
    expect(pointInPolygon(SQUARE, 0.9, 0.9)).toBe(false);
  });
});

describe("classifyClick", () => {
  it("ignores clicks outside the polygon without issuing a request", () => {
    const t = fitTransform(480, 480);
    const corner = classifyClick(t, SQUARE, 2, 2);
    expect(corner.kind).toBe("ignored");
  });

  it("converts an inside click to shape coordinates", () => {
    const t = fitTransform(480, 480);
    const action = classifyClick(t, SQUARE, 240, 240);
    expect(action.kind).toBe("audition");
    if (action.kind === "audition") {
      expect(action.position[0]).toBeCloseTo(0.5, 6);
      expect(action.position[1]).toBeCloseTo(0.5, 6);
    }
  });
});
