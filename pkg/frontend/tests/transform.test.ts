import { describe, expect, it } from "vitest";

import { fitTransform, toCanvas } from "../src/transform.js";

describe("fitTransform", () => {
  it("letterboxes a wide canvas around a square arena", () => {
    const t = fitTransform(4, 4, 800, 400);
    expect(t.scale).toBe(100); // height-limited
    expect(t.offsetX).toBe(200); // centered horizontally
    expect(t.offsetY).toBe(0);
  });

  it("preserves aspect ratio for a tall canvas", () => {
    const t = fitTransform(4, 2, 400, 800);
    expect(t.scale).toBe(100); // width-limited
    expect(t.offsetY).toBe(300);
  });

  it("maps arena corners onto the canvas with y flipped", () => {
    const t = fitTransform(4, 4, 400, 400);
    expect(toCanvas(t, 0, 0)).toEqual([0, 400]); // arena origin is bottom-left
    expect(toCanvas(t, 4, 4)).toEqual([400, 0]);
    expect(toCanvas(t, 1, 0)).toEqual([100, 400]);
  });

  it("applies the affine map to an interior pose", () => {
    const t = fitTransform(4, 4, 400, 400);
    const [cx, cy] = toCanvas(t, 1, 0);
    expect(cx).toBeCloseTo(100);
    expect(cy).toBeCloseTo(400);
  });
});
