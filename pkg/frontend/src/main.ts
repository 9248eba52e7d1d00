import * as THREE from "three";

import { PlanAnimator, validatePlan } from "./animate.js";
import { BusyError, SessionClient, Transport } from "./client.js";
import { PickingPlane, pickOnPlane } from "./picking.js";
import { Vec3 } from "./protocol.js";
import { OperatorView } from "./viewer.js";

/** Browser transport: binary WebSocket to the TCP bridge (scripts/bridge.mjs). */
class WsTransport implements Transport {
  private dataCb: ((chunk: Uint8Array) => void) | null = null;
  private closeCb: (() => void) | null = null;

  constructor(private ws: WebSocket) {
    ws.binaryType = "arraybuffer";
    ws.onmessage = (ev) =>
      this.dataCb?.(new Uint8Array(ev.data as ArrayBuffer));
    ws.onclose = () => this.closeCb?.();
  }

  send(data: Uint8Array) {
    this.ws.send(data);
  }
  onData(cb: (chunk: Uint8Array) => void) {
    this.dataCb = cb;
  }
  onClose(cb: () => void) {
    this.closeCb = cb;
  }
  close() {
    this.ws.close();
  }
}

function banner(text: string, isError = false) {
  const el = document.getElementById("status")!;
  el.textContent = text;
  el.className = isError ? "error" : "";
}

async function start() {
  const params = new URLSearchParams(location.search);
  const url = params.get("bridge") ?? "ws://127.0.0.1:7080";
  const ws = new WebSocket(url);
  await new Promise<void>((ok, bad) => {
    ws.onopen = () => ok();
    ws.onerror = () => bad(new Error(`cannot reach bridge at ${url}`));
  });
  const client = new SessionClient(new WsTransport(ws));
  const scene = await client.getScene();

  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const renderer = new THREE.WebGLRenderer({ canvas });
  renderer.setSize(canvas.clientWidth, canvas.clientHeight, false);
  const view = new OperatorView(canvas.clientWidth / canvas.clientHeight);
  view.loadScene(scene);

  const plane: PickingPlane = {
    axis: 1,
    value: (scene.workspace_box_mm.min[1] + scene.workspace_box_mm.max[1]) / 2,
  };
  view.showPickingPlane(plane);

  let animator: PlanAnimator | null = null;
  let frame = 0;

  canvas.addEventListener("wheel", (ev) => {
    // scroll moves the picking plane through the cavity
    plane.value += ev.deltaY > 0 ? -2 : 2;
    view.showPickingPlane(plane);
  });

  canvas.addEventListener("click", async (ev) => {
    if (client.busy) return; // one outstanding goal; input disabled
    const rect = canvas.getBoundingClientRect();
    const ray = view.rayFromNdc(
      ((ev.clientX - rect.left) / rect.width) * 2 - 1,
      -((ev.clientY - rect.top) / rect.height) * 2 + 1,
    );
    const pick = pickOnPlane(ray, plane, scene.workspace_box_mm);
    if (pick.kind === "rejected") {
      banner(`rejected: ${pick.reason}`, true);
      return;
    }
    view.showMarker(pick.goal);
    banner("planning...");
    try {
      const plan = await client.setGoal(pick.goal);
      validatePlan(plan);
      animator = new PlanAnimator(plan.polylines);
      frame = 0;
      banner(
        `tip error ${plan.tip_error_mm.toFixed(3)} mm, ` +
          `${(plan.timings_s.total * 1000).toFixed(0)} ms ` +
          `(ik ${(plan.timings_s.ik * 1000).toFixed(0)} ms)`,
      );
    } catch (err) {
      if (err instanceof BusyError) banner("busy, try again", true);
      else banner(String(err), true);
    }
  });

  const tick = () => {
    if (animator) {
      view.showBackbone(animator.frameAt(frame));
      if (frame + 1 < animator.frameCount) frame++;
    }
    renderer.render(view.scene, view.camera);
    requestAnimationFrame(tick);
  };
  const home: Vec3 = [...scene.insertion.position_mm];
  view.showMarker(home);
  tick();
}

start().catch((err) => banner(String(err), true));
