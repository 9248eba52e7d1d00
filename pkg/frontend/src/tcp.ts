import * as net from "node:net";

import { Transport } from "./client.js";

/** Node TCP transport for headless clients and tests. */
export class TcpTransport implements Transport {
  private dataCb: ((chunk: Uint8Array) => void) | null = null;
  private closeCb: (() => void) | null = null;

  private constructor(private sock: net.Socket) {
    sock.on("data", (chunk) => this.dataCb?.(new Uint8Array(chunk)));
    sock.on("close", () => this.closeCb?.());
    sock.on("error", () => this.closeCb?.());
  }

  static connect(host: string, port: number): Promise<TcpTransport> {
    return new Promise((resolve, reject) => {
      const sock = net.createConnection({ host, port }, () =>
        resolve(new TcpTransport(sock)),
      );
      sock.once("error", reject);
    });
  }

  send(data: Uint8Array): void {
    this.sock.write(data);
  }

  onData(cb: (chunk: Uint8Array) => void): void {
    this.dataCb = cb;
  }

  onClose(cb: () => void): void {
    this.closeCb = cb;
  }

  close(): void {
    this.sock.destroy();
  }
}
