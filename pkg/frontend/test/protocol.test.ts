import { describe, expect, it } from "vitest";

import {
  FrameDecoder,
  encodeFrame,
  isServerMessage,
  quantizeMm,
} from "../src/protocol.js";

describe("frame codec", () => {
  it("round trips a message", () => {
    const frame = encodeFrame({ type: "set_goal", x: 1.5, y: -2, z: 90 });
    const view = new DataView(frame.buffer);
    expect(view.getUint32(0, true)).toBe(frame.length - 4);
    const [msg] = new FrameDecoder().push(frame);
    expect(msg).toEqual({ type: "set_goal", x: 1.5, y: -2, z: 90 });
  });

  it("reassembles frames split across arbitrary chunk boundaries", () => {
    const a = encodeFrame({ type: "get_scene" });
    const b = encodeFrame({ type: "set_goal", x: 0, y: 0, z: 50 });
    const stream = new Uint8Array(a.length + b.length);
    stream.set(a);
    stream.set(b, a.length);
    for (const cut of [1, 3, 5, a.length, a.length + 2]) {
      const dec = new FrameDecoder();
      const got = [
        ...dec.push(stream.subarray(0, cut)),
        ...dec.push(stream.subarray(cut)),
      ];
      expect(got).toHaveLength(2);
      expect((got[0] as { type: string }).type).toBe("get_scene");
      expect((got[1] as { type: string }).type).toBe("set_goal");
    }
  });

  it("decodes coalesced frames one byte at a time", () => {
    const frames = [1, 2, 3].map((z) =>
      encodeFrame({ type: "set_goal", x: 0, y: 0, z }),
    );
    const dec = new FrameDecoder();
    const got: unknown[] = [];
    for (const f of frames) {
      for (const byte of f) got.push(...dec.push(new Uint8Array([byte])));
    }
    expect(got).toHaveLength(3);
  });

  it("guards server message shape", () => {
    expect(isServerMessage({ type: "busy", v: 1, seq: 4 })).toBe(true);
    expect(isServerMessage({ type: "busy" })).toBe(false);
    expect(isServerMessage({ type: "nope", v: 1, seq: 4 })).toBe(false);
    expect(isServerMessage(null)).toBe(false);
  });
});

describe("goal quantization", () => {
  it("keeps mm precision through JSON", () => {
    const g = quantizeMm([12.3456789, -0.0004, 99.9999]);
    expect(g).toEqual([12.346, 0, 100]);
    expect(Object.is(g[1], -0)).toBe(false); // JSON cannot carry -0
    expect(JSON.parse(JSON.stringify(g))).toEqual(g);
    // already-quantized values are fixed points
    expect(quantizeMm(g)).toEqual(g);
  });
});
