import { describe, expect, it } from "vitest";

import { PlanAnimator, resample, validatePlan } from "../src/animate.js";
import { PlanResultMessage, Vec3 } from "../src/protocol.js";

const straight: Vec3[] = [
  [0, 0, 0],
  [0, 0, 60],
  [0, 0, 120],
];
const bent: Vec3[] = [
  [0, 0, 0],
  [5, 0, 58],
  [12, 0, 112],
];

describe("resampling", () => {
  it("keeps endpoints exactly and spaces by arc length", () => {
    const out = resample(straight, 7);
    expect(out).toHaveLength(7);
    expect(out[0]).toEqual(straight[0]);
    expect(out[6]).toEqual(straight[2]);
    for (let i = 1; i < 7; i++) {
      expect(out[i][2] - out[i - 1][2]).toBeCloseTo(20);
    }
  });

  it("handles degenerate single-point polylines", () => {
    const out = resample([[1, 2, 3]], 4);
    expect(out).toHaveLength(4);
    for (const p of out) expect(p).toEqual([1, 2, 3]);
  });
});

describe("plan animation", () => {
  it("a single-waypoint plan renders one static pose", () => {
    const anim = new PlanAnimator([straight]);
    expect(anim.frameCount).toBe(1);
    expect(anim.frameAt(0)).toEqual(straight);
    expect(anim.finalTip).toEqual([0, 0, 120]);
  });

  it("a two-waypoint plan starts at the first backbone and ends at the second", () => {
    const anim = new PlanAnimator([straight, bent], 10);
    expect(anim.frameCount).toBe(11);
    const first = anim.frameAt(0);
    const last = anim.frameAt(anim.frameCount - 1);
    // headless render check: compare frame polylines to the plan's
    const n = Math.max(straight.length, bent.length);
    expect(first).toEqual(resample(straight, n));
    expect(last).toEqual(resample(bent, n));
    expect(anim.finalTip).toEqual(bent[bent.length - 1]);
    // intermediate frames move monotonically between the endpoints
    const mid = anim.frameAt(5);
    expect(mid[2][0]).toBeGreaterThan(0);
    expect(mid[2][0]).toBeLessThan(12);
  });

  it("interpolates across polylines of different lengths", () => {
    const dense: Vec3[] = Array.from({ length: 64 }, (_, i) => [
      0,
      0,
      (120 * i) / 63,
    ]);
    const anim = new PlanAnimator([straight, dense], 4);
    for (let i = 0; i < anim.frameCount; i++) {
      expect(anim.frameAt(i)).toHaveLength(64);
    }
    expect(anim.frameAt(anim.frameCount - 1)[63]).toEqual([0, 0, 120]);
  });

  it("rejects malformed plans without touching state", () => {
    const base = {
      type: "plan_result",
      v: 1,
      seq: 1,
      goal: [0, 0, 100],
      tip: [0, 0, 100],
      tip_error_mm: 0,
      timings_s: { ik: 0, search: 0, total: 0 },
    };
    expect(() =>
      validatePlan({ ...base, waypoints: [], polylines: [] } as unknown as PlanResultMessage),
    ).toThrow("no polylines");
    expect(() =>
      validatePlan({
        ...base,
        waypoints: [[0, 0, 0, 0, 0]],
        polylines: [straight, bent],
      } as unknown as PlanResultMessage),
    ).toThrow("mismatch");
    expect(() =>
      validatePlan({
        ...base,
        waypoints: [[0, 0, 0, 0, 0]],
        polylines: [[[0, 0, Number.NaN]]],
      } as unknown as PlanResultMessage),
    ).toThrow("non-finite");
    expect(() => new PlanAnimator([])).toThrow();
  });
});
