import { AddressInfo, Server, Socket, createServer } from "node:net";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { BusyError, ServiceError, SessionClient } from "../src/client.js";
import { TcpTransport } from "../src/tcp.js";
import { FrameDecoder } from "../src/protocol.js";

/** Minimal scripted stand-in for the planning service. */
class MockService {
  server: Server;
  seq = 0;
  planning = false;
  planDelayMs = 30;

  constructor() {
    this.server = createServer((sock) => this.serve(sock));
  }

  listen(): Promise<number> {
    return new Promise((ok) => {
      this.server.listen(0, "127.0.0.1", () =>
        ok((this.server.address() as AddressInfo).port),
      );
    });
  }

  private send(sock: Socket, msg: Record<string, unknown>) {
    const body = Buffer.from(JSON.stringify({ ...msg, v: 1, seq: ++this.seq }));
    const head = Buffer.alloc(4);
    head.writeUInt32LE(body.length);
    sock.write(Buffer.concat([head, body]));
  }

  private serve(sock: Socket) {
    const dec = new FrameDecoder();
    sock.on("data", (chunk) => {
      for (const raw of dec.push(new Uint8Array(chunk))) {
        const msg = raw as Record<string, unknown>;
        if (msg.type === "get_scene") {
          this.send(sock, { type: "scene", dims: [8, 8, 8] });
        } else if (msg.type === "set_goal") {
          if (this.planning) {
            this.send(sock, { type: "busy" });
            continue;
          }
          this.planning = true;
          setTimeout(() => {
            this.planning = false;
            this.send(sock, {
              type: "plan_result",
              goal: [msg.x, msg.y, msg.z],
              waypoints: [[0, 0, 0, 0, 0]],
              polylines: [[[0, 0, 0], [0, 0, 120]]],
              tip: [msg.x, msg.y, msg.z],
              tip_error_mm: 0.1,
              timings_s: { ik: 0.01, search: 0.0, total: 0.01 },
            });
          }, this.planDelayMs);
        } else {
          this.send(sock, { type: "error", message: `unknown ${msg.type}` });
        }
      }
    });
  }

  close() {
    this.server.close();
  }
}

describe("session client", () => {
  let svc: MockService;
  let client: SessionClient;

  beforeEach(async () => {
    svc = new MockService();
    const port = await svc.listen();
    client = new SessionClient(await TcpTransport.connect("127.0.0.1", port));
  });

  afterEach(() => {
    client.close();
    svc.close();
  });

  it("requests the scene", async () => {
    const scene = await client.getScene();
    expect(scene.type).toBe("scene");
    expect(scene.dims).toEqual([8, 8, 8]);
  });

  it("resolves a goal with a plan and echoes the goal", async () => {
    const plan = await client.setGoal([1, 2, 3]);
    expect(plan.type).toBe("plan_result");
    expect(plan.goal).toEqual([1, 2, 3]);
    expect(plan.polylines[0].length).toBeGreaterThan(1);
  });

  it("rejects a second concurrent goal locally without sending", async () => {
    const first = client.setGoal([0, 0, 50]);
    expect(client.busy).toBe(true);
    await expect(client.setGoal([1, 1, 50])).rejects.toBeInstanceOf(BusyError);
    await first;
    expect(client.busy).toBe(false);
    // after completion, goals flow again
    const plan = await client.setGoal([2, 2, 60]);
    expect(plan.goal).toEqual([2, 2, 60]);
  });

  it("tracks strictly increasing sequence numbers", async () => {
    const s0 = (await client.getScene()).seq;
    const s1 = (await client.getScene()).seq;
    const s2 = (await client.setGoal([0, 0, 40])).seq;
    expect(s1).toBeGreaterThan(s0);
    expect(s2).toBeGreaterThan(s1);
    expect(client.seq).toBe(s2);
  });

  it("surfaces service errors as exceptions", async () => {
    // reach into the transport to send an unknown type
    const bad = client as unknown as {
      request(msg: unknown): Promise<unknown>;
    };
    const reply = (await bad.request({ type: "frobnicate" })) as {
      type: string;
    };
    expect(reply.type).toBe("error");
    await expect(client.getScene()).resolves.toBeTruthy();
  });

  it("quantizes goals to micrometers on the wire", async () => {
    const plan = await client.setGoal([1.00000049, 2, 3]);
    expect(plan.goal[0]).toBe(1);
  });

  it("fails pending requests when the connection drops", async () => {
    const p = client.setGoal([0, 0, 50]);
    svc.close();
    // force-close the socket mid-request
    client.close();
    await expect(p).rejects.toBeInstanceOf(Error);
    await expect(client.getScene()).rejects.toThrow("closed");
  });

  it("rejects non-monotone sequence numbers", async () => {
    // a second mock that repeats seq values
    const rogue = createServer((sock) => {
      const dec = new FrameDecoder();
      sock.on("data", (chunk) => {
        for (const _ of dec.push(new Uint8Array(chunk))) {
          const body = Buffer.from(
            JSON.stringify({ type: "busy", v: 1, seq: 1 }),
          );
          const head = Buffer.alloc(4);
          head.writeUInt32LE(body.length);
          sock.write(Buffer.concat([head, body]));
        }
      });
    });
    const port = await new Promise<number>((ok) =>
      rogue.listen(0, "127.0.0.1", () =>
        ok((rogue.address() as AddressInfo).port),
      ),
    );
    const c2 = new SessionClient(await TcpTransport.connect("127.0.0.1", port));
    await c2.getScene().catch(() => undefined); // busy, seq 1 accepted
    await expect(c2.getScene()).rejects.toBeInstanceOf(ServiceError);
    c2.close();
    rogue.close();
  });
});
