import { SceneMessage, Vec3 } from "./protocol.js";

/** World-space ray; direction need not be normalized. */
export interface Ray {
  origin: Vec3;
  dir: Vec3;
}

export type Axis = 0 | 1 | 2;

export interface Box {
  min: Vec3;
  max: Vec3;
}

export interface PickingPlane {
  axis: Axis;
  /** world coordinate of the plane along its axis, mm */
  value: number;
}

export type PickResult =
  | { kind: "goal"; goal: Vec3 }
  | { kind: "rejected"; reason: string };

function at(ray: Ray, t: number): Vec3 {
  return [
    ray.origin[0] + t * ray.dir[0],
    ray.origin[1] + t * ray.dir[1],
    ray.origin[2] + t * ray.dir[2],
  ];
}

export function inBox(p: Vec3, box: Box): boolean {
  for (let a = 0; a < 3; a++) {
    if (p[a] < box.min[a] || p[a] > box.max[a]) return false;
  }
  return true;
}

/** Ray / axis-aligned plane intersection, null if parallel or behind. */
export function intersectPlane(ray: Ray, plane: PickingPlane): Vec3 | null {
  const d = ray.dir[plane.axis];
  if (Math.abs(d) < 1e-12) return null;
  const t = (plane.value - ray.origin[plane.axis]) / d;
  if (t <= 0) return null;
  return at(ray, t);
}

/**
 * Ray / axis-aligned box intersection (slab test). Returns entry t and
 * the axis of the face hit, or null.
 */
export function intersectBox(
  ray: Ray,
  box: Box,
): { t: number; axis: Axis; side: 1 | -1 } | null {
  let tmin = -Infinity;
  let tmax = Infinity;
  let axis: Axis = 0;
  let side: 1 | -1 = 1;
  for (let a = 0 as Axis; a < 3; a++) {
    const d = ray.dir[a];
    if (Math.abs(d) < 1e-12) {
      if (ray.origin[a] < box.min[a] || ray.origin[a] > box.max[a])
        return null;
      continue;
    }
    let t0 = (box.min[a] - ray.origin[a]) / d;
    let t1 = (box.max[a] - ray.origin[a]) / d;
    let s: 1 | -1 = d > 0 ? -1 : 1;
    if (t0 > t1) {
      [t0, t1] = [t1, t0];
      s = -s as 1 | -1;
    }
    if (t0 > tmin) {
      tmin = t0;
      axis = a as Axis;
      side = s;
    }
    tmax = Math.min(tmax, t1);
    if (tmin > tmax) return null;
  }
  if (tmin <= 0) return null;
  return { t: tmin, axis, side };
}

/** Pick a goal on an axis-aligned picking plane, rejecting points
 * outside the workspace box. Nothing is sent on rejection. */
export function pickOnPlane(
  ray: Ray,
  plane: PickingPlane,
  workspace: Box,
): PickResult {
  const hit = intersectPlane(ray, plane);
  if (hit === null)
    return { kind: "rejected", reason: "ray misses the picking plane" };
  if (!inBox(hit, workspace))
    return { kind: "rejected", reason: "outside the workspace box" };
  return { kind: "goal", goal: hit };
}

function voxelBox(scene: SceneMessage, idx: Vec3): Box {
  const { spacing_mm: sp, origin_mm: o } = scene;
  return {
    min: [
      o[0] + idx[0] * sp[0],
      o[1] + idx[1] * sp[1],
      o[2] + idx[2] * sp[2],
    ],
    max: [
      o[0] + (idx[0] + 1) * sp[0],
      o[1] + (idx[1] + 1) * sp[1],
      o[2] + (idx[2] + 1) * sp[2],
    ],
  };
}

/**
 * Obstacle-surface picking mode: intersect the ray with the scene's
 * surface voxel boxes, take the nearest hit, and offset the goal inward
 * (against the hit face normal) by the given margin so the goal sits in
 * free space rather than on the wall.
 */
export function pickOnSurface(
  ray: Ray,
  scene: SceneMessage,
  workspace: Box,
  marginMm: number,
): PickResult {
  let best: { t: number; p: Vec3; axis: Axis; side: 1 | -1 } | null = null;
  for (const idx of scene.surface_voxels) {
    const hit = intersectBox(ray, voxelBox(scene, idx));
    if (hit && (best === null || hit.t < best.t)) {
      best = { t: hit.t, p: at(ray, hit.t), axis: hit.axis, side: hit.side };
    }
  }
  if (best === null)
    return { kind: "rejected", reason: "ray misses the obstacle surface" };
  const goal: Vec3 = [...best.p];
  goal[best.axis] += best.side * marginMm;
  if (!inBox(goal, workspace))
    return { kind: "rejected", reason: "outside the workspace box" };
  return { kind: "goal", goal };
}
