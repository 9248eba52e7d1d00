/**
 * Wire protocol for the planning session service.
 *
 * Every message is a 4-byte little-endian length prefix followed by a
 * UTF-8 JSON object. Messages carry "v": 1; server messages additionally
 * carry a strictly increasing "seq".
 */

export const PROTOCOL_VERSION = 1;

export type Vec3 = [number, number, number];

export interface SetGoalMessage {
  type: "set_goal";
  x: number;
  y: number;
  z: number;
  full_polylines?: boolean;
}

export interface GetSceneMessage {
  type: "get_scene";
}

export type ClientMessage = SetGoalMessage | GetSceneMessage;

export interface PlanResultMessage {
  type: "plan_result";
  v: number;
  seq: number;
  goal: Vec3;
  /** configurations [tau_1..tau_N, rotation, retraction], start first */
  waypoints: number[][];
  /** per-waypoint backbone centerlines in mm, <= 64 points each */
  polylines: Vec3[][];
  tip: Vec3;
  tip_error_mm: number;
  timings_s: { ik: number; search: number; total: number };
}

export interface SceneMessage {
  type: "scene";
  v: number;
  seq: number;
  dims: Vec3;
  spacing_mm: Vec3;
  origin_mm: Vec3;
  surface_voxels: Vec3[];
  insertion: { position_mm: Vec3; direction: Vec3 };
  workspace_box_mm: { min: Vec3; max: Vec3 };
  tip_cloud_mm: Vec3[];
}

export interface BusyMessage {
  type: "busy";
  v: number;
  seq: number;
}

export interface ErrorMessage {
  type: "error";
  v: number;
  seq: number;
  message: string;
}

export type ServerMessage =
  | PlanResultMessage
  | SceneMessage
  | BusyMessage
  | ErrorMessage;

export function isServerMessage(x: unknown): x is ServerMessage {
  if (typeof x !== "object" || x === null) return false;
  const m = x as Record<string, unknown>;
  return (
    typeof m.type === "string" &&
    typeof m.v === "number" &&
    typeof m.seq === "number" &&
    ["plan_result", "scene", "busy", "error"].includes(m.type)
  );
}

/** Length-prefix one JSON message for the wire. */
export function encodeFrame(msg: ClientMessage): Uint8Array {
  const body = new TextEncoder().encode(JSON.stringify(msg));
  const out = new Uint8Array(4 + body.length);
  new DataView(out.buffer).setUint32(0, body.length, true);
  out.set(body, 4);
  return out;
}

/**
 * Incremental frame decoder: feed arbitrary byte chunks, get complete
 * JSON messages out. Frames may arrive split or coalesced.
 */
export class FrameDecoder {
  private buf = new Uint8Array(0);

  push(chunk: Uint8Array): unknown[] {
    const merged = new Uint8Array(this.buf.length + chunk.length);
    merged.set(this.buf);
    merged.set(chunk, this.buf.length);
    this.buf = merged;

    const out: unknown[] = [];
    for (;;) {
      if (this.buf.length < 4) break;
      const view = new DataView(
        this.buf.buffer,
        this.buf.byteOffset,
        this.buf.byteLength,
      );
      const n = view.getUint32(0, true);
      if (this.buf.length < 4 + n) break;
      const body = this.buf.subarray(4, 4 + n);
      out.push(JSON.parse(new TextDecoder().decode(body)));
      this.buf = this.buf.slice(4 + n);
    }
    return out;
  }
}

/** Round a goal to whole micrometers so it survives JSON round trips. */
export function quantizeMm(p: Vec3): Vec3 {
  // + 0 folds negative zero, which JSON cannot represent
  return [
    Math.round(p[0] * 1000) / 1000 + 0,
    Math.round(p[1] * 1000) / 1000 + 0,
    Math.round(p[2] * 1000) / 1000 + 0,
  ];
}
