import { PlanResultMessage, Vec3 } from "./protocol.js";

/**
 * Frame generator for a received plan: linear interpolation between
 * consecutive waypoint backbone polylines at a fixed frame rate. All
 * geometry comes from the plan message; no client-side kinematics.
 */
export class PlanAnimator {
  readonly frames: Vec3[][];

  constructor(
    polylines: Vec3[][],
    framesPerEdge = 15,
  ) {
    if (polylines.length === 0) throw new Error("plan has no polylines");
    if (framesPerEdge < 1) throw new Error("framesPerEdge must be >= 1");
    const n = Math.max(...polylines.map((p) => p.length));
    const resampled = polylines.map((p) => resample(p, n));
    if (resampled.length === 1) {
      this.frames = [resampled[0]]; // single waypoint: static pose
      return;
    }
    const frames: Vec3[][] = [resampled[0]];
    for (let e = 0; e + 1 < resampled.length; e++) {
      for (let f = 1; f < framesPerEdge; f++) {
        frames.push(lerpPolyline(resampled[e], resampled[e + 1],
          f / framesPerEdge));
      }
      // land exactly on the waypoint backbone, no lerp rounding
      frames.push(resampled[e + 1]);
    }
    this.frames = frames;
  }

  get frameCount(): number {
    return this.frames.length;
  }

  frameAt(i: number): Vec3[] {
    if (i < 0 || i >= this.frames.length)
      throw new Error(`frame ${i} out of range`);
    return this.frames[i];
  }

  /** Rendered tip position of the final frame. */
  get finalTip(): Vec3 {
    const last = this.frames[this.frames.length - 1];
    return last[last.length - 1];
  }
}

/** Resample a polyline to n points by arc-length interpolation. */
export function resample(points: Vec3[], n: number): Vec3[] {
  if (points.length === 0) throw new Error("empty polyline");
  if (points.length === 1 || n === 1)
    return Array.from({ length: n }, () => [...points[0]] as Vec3);
  const cum = [0];
  for (let i = 1; i < points.length; i++) {
    cum.push(cum[i - 1] + dist(points[i - 1], points[i]));
  }
  const total = cum[cum.length - 1];
  const out: Vec3[] = [];
  let seg = 0;
  for (let k = 0; k < n; k++) {
    const target = (total * k) / (n - 1);
    while (seg + 1 < cum.length - 1 && cum[seg + 1] < target) seg++;
    const span = cum[seg + 1] - cum[seg];
    const u = span > 0 ? (target - cum[seg]) / span : 0;
    out.push(lerp(points[seg], points[seg + 1], u));
  }
  // endpoints exact regardless of floating point accumulation
  out[0] = [...points[0]];
  out[n - 1] = [...points[points.length - 1]];
  return out;
}

function dist(a: Vec3, b: Vec3): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}

function lerp(a: Vec3, b: Vec3, u: number): Vec3 {
  return [
    a[0] + u * (b[0] - a[0]),
    a[1] + u * (b[1] - a[1]),
    a[2] + u * (b[2] - a[2]),
  ];
}

function lerpPolyline(a: Vec3[], b: Vec3[], u: number): Vec3[] {
  return a.map((p, i) => lerp(p, b[i], u));
}

/** Guard a plan message before animating; throws on malformed input. */
export function validatePlan(plan: PlanResultMessage): void {
  if (!Array.isArray(plan.polylines) || plan.polylines.length === 0)
    throw new Error("plan has no polylines");
  if (plan.polylines.length !== plan.waypoints.length)
    throw new Error("waypoint/polyline count mismatch");
  for (const poly of plan.polylines) {
    if (poly.length < 1) throw new Error("empty backbone polyline");
    for (const p of poly) {
      if (p.length !== 3 || p.some((x) => !Number.isFinite(x)))
        throw new Error("non-finite polyline point");
    }
  }
}
