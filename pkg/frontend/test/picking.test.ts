import { describe, expect, it } from "vitest";

import {
  Box,
  Ray,
  inBox,
  intersectBox,
  intersectPlane,
  pickOnPlane,
  pickOnSurface,
} from "../src/picking.js";
import { SceneMessage, Vec3, quantizeMm } from "../src/protocol.js";

const workspace: Box = { min: [-38, -38, 18], max: [38, 38, 98] };

function rayThrough(origin: Vec3, target: Vec3): Ray {
  return {
    origin,
    dir: [
      target[0] - origin[0],
      target[1] - origin[1],
      target[2] - origin[2],
    ],
  };
}

describe("plane picking", () => {
  it("intersects an axis-aligned plane", () => {
    const ray: Ray = { origin: [0, -200, 60], dir: [0, 1, 0] };
    const hit = intersectPlane(ray, { axis: 1, value: 10 });
    expect(hit).toEqual([0, 10, 60]);
    // parallel ray misses
    expect(intersectPlane(ray, { axis: 0, value: 5 })).toBeNull();
    // plane behind the camera
    expect(intersectPlane(ray, { axis: 1, value: -300 })).toBeNull();
  });

  it("clicking the current tip marker yields the current tip", () => {
    const tip: Vec3 = [4.25, -7.5, 93.125];
    const ray = rayThrough([0, -250, 60], tip);
    const res = pickOnPlane(ray, { axis: 1, value: tip[1] }, workspace);
    expect(res.kind).toBe("goal");
    if (res.kind === "goal") {
      for (let a = 0; a < 3; a++) expect(res.goal[a]).toBeCloseTo(tip[a], 9);
    }
  });

  it("rejects clicks outside the workspace box, sending nothing", () => {
    const outside: Vec3 = [90, 0, 60];
    const ray = rayThrough([0, 0, 300], outside);
    const res = pickOnPlane(ray, { axis: 2, value: 60 }, workspace);
    expect(res.kind).toBe("rejected");
    if (res.kind === "rejected")
      expect(res.reason).toContain("workspace");
  });

  it("marker positions survive the wire format at mm precision", () => {
    const goal: Vec3 = [12.345, -0.001, 97.999];
    const q = quantizeMm(goal);
    const wire = JSON.parse(
      JSON.stringify({ type: "set_goal", x: q[0], y: q[1], z: q[2] }),
    );
    expect([wire.x, wire.y, wire.z]).toEqual(q);
    expect(q.map((v, i) => Math.abs(v - goal[i]) <= 5e-4)).toEqual([
      true,
      true,
      true,
    ]);
  });
});

describe("surface picking", () => {
  const scene = {
    type: "scene",
    v: 1,
    seq: 1,
    dims: [16, 16, 16],
    spacing_mm: [1, 1, 1],
    origin_mm: [0, 0, 0],
    // a single-voxel "wall" column at x = 10
    surface_voxels: [
      [10, 8, 8],
      [10, 8, 9],
    ],
    insertion: { position_mm: [0, 0, 0], direction: [0, 0, 1] },
    workspace_box_mm: { min: [0, 0, 0], max: [16, 16, 16] },
    tip_cloud_mm: [],
  } as unknown as SceneMessage;

  it("slab test finds the entry face", () => {
    const hit = intersectBox(
      { origin: [-5, 8.5, 8.5], dir: [1, 0, 0] },
      { min: [10, 8, 8], max: [11, 9, 9] },
    );
    expect(hit).not.toBeNull();
    expect(hit!.t).toBeCloseTo(15);
    expect(hit!.axis).toBe(0);
    expect(hit!.side).toBe(-1); // outward normal points back at the ray
    expect(
      intersectBox(
        { origin: [-5, 20, 8.5], dir: [1, 0, 0] },
        { min: [10, 8, 8], max: [11, 9, 9] },
      ),
    ).toBeNull();
  });

  it("offsets the picked goal off the wall, into free space", () => {
    const ray: Ray = { origin: [0, 8.5, 8.5], dir: [1, 0, 0] };
    const res = pickOnSurface(ray, scene, scene.workspace_box_mm, 2.0);
    expect(res.kind).toBe("goal");
    if (res.kind === "goal") {
      // wall face at x = 10, offset 2 mm toward the viewer
      expect(res.goal[0]).toBeCloseTo(8.0);
      expect(res.goal[1]).toBeCloseTo(8.5);
      expect(inBox(res.goal, scene.workspace_box_mm)).toBe(true);
    }
  });

  it("rejects rays that miss every surface voxel", () => {
    const res = pickOnSurface(
      { origin: [0, 0, 0], dir: [0, 0, 1] },
      scene,
      scene.workspace_box_mm,
      2.0,
    );
    expect(res.kind).toBe("rejected");
  });
});
