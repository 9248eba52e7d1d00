import {
  ClientMessage,
  ErrorMessage,
  FrameDecoder,
  PlanResultMessage,
  SceneMessage,
  ServerMessage,
  Vec3,
  encodeFrame,
  isServerMessage,
  quantizeMm,
} from "./protocol.js";

/** Byte transport under the session client (TCP in node, WebSocket in
 * the browser via the bridge). */
export interface Transport {
  send(data: Uint8Array): void;
  onData(cb: (chunk: Uint8Array) => void): void;
  onClose(cb: () => void): void;
  close(): void;
}

export class ServiceError extends Error {}

export class BusyError extends Error {
  constructor() {
    super("service is busy planning a previous goal");
  }
}

interface Pending {
  resolve: (msg: ServerMessage) => void;
  reject: (err: Error) => void;
}

/**
 * Request/response client over the session protocol.
 *
 * The service answers exactly one message per request, in order, so a
 * FIFO of pending resolvers suffices. Only one set_goal may be
 * outstanding at a time (the service's busy contract); a second concurrent
 * goal is rejected locally without touching the wire.
 */
export class SessionClient {
  private decoder = new FrameDecoder();
  private pending: Pending[] = [];
  private lastSeq = 0;
  private goalInFlight = false;
  private closed = false;

  constructor(private transport: Transport) {
    transport.onData((chunk) => this.feed(chunk));
    transport.onClose(() => this.failAll(new Error("connection closed")));
  }

  private feed(chunk: Uint8Array) {
    for (const raw of this.decoder.push(chunk)) {
      if (!isServerMessage(raw)) {
        this.failAll(new ServiceError("malformed server message"));
        return;
      }
      if (raw.seq <= this.lastSeq) {
        this.failAll(
          new ServiceError(
            `sequence went backwards: ${raw.seq} after ${this.lastSeq}`,
          ),
        );
        return;
      }
      this.lastSeq = raw.seq;
      const p = this.pending.shift();
      if (p) p.resolve(raw);
    }
  }

  private failAll(err: Error) {
    this.closed = true;
    const ps = this.pending;
    this.pending = [];
    for (const p of ps) p.reject(err);
  }

  private request(msg: ClientMessage): Promise<ServerMessage> {
    if (this.closed) return Promise.reject(new Error("client closed"));
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.transport.send(encodeFrame(msg));
    });
  }

  /** Highest sequence number seen so far. */
  get seq(): number {
    return this.lastSeq;
  }

  get busy(): boolean {
    return this.goalInFlight;
  }

  async getScene(): Promise<SceneMessage> {
    const reply = await this.request({ type: "get_scene" });
    if (reply.type === "error")
      throw new ServiceError((reply as ErrorMessage).message);
    if (reply.type !== "scene")
      throw new ServiceError(`expected scene, got ${reply.type}`);
    return reply;
  }

  async setGoal(
    goal: Vec3,
    opts: { fullPolylines?: boolean } = {},
  ): Promise<PlanResultMessage> {
    if (this.goalInFlight) throw new BusyError();
    this.goalInFlight = true;
    try {
      const [x, y, z] = quantizeMm(goal);
      const reply = await this.request({
        type: "set_goal",
        x,
        y,
        z,
        ...(opts.fullPolylines ? { full_polylines: true } : {}),
      });
      if (reply.type === "busy") throw new BusyError();
      if (reply.type === "error")
        throw new ServiceError((reply as ErrorMessage).message);
      if (reply.type !== "plan_result")
        throw new ServiceError(`expected plan_result, got ${reply.type}`);
      return reply;
    } finally {
      this.goalInFlight = false;
    }
  }

  close() {
    this.closed = true;
    this.transport.close();
  }
}
