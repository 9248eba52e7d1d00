/**
 * End-to-end protocol round trip against the real planning service.
 *
 * Spawns the Python service on a small cached roadmap, streams 50 goals,
 * and checks the protocol contract: monotone sequence numbers, one
 * plan_result per goal, streaming continuity (each plan's first waypoint
 * equals the prior plan's last), and that headless animation frames start
 * and end exactly on the plan's polylines.
 */
import { ChildProcess, spawn } from "node:child_process";
import { existsSync } from "node:fs";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { PlanAnimator, resample, validatePlan } from "../src/animate.js";
import { BusyError, SessionClient } from "../src/client.js";
import { TcpTransport } from "../src/tcp.js";
import { PlanResultMessage, Vec3 } from "../src/protocol.js";

const REPO = path.resolve(__dirname, "..", "..");
const ROADMAP = path.join(REPO, "tests", "_cache", "roadmap_40_seed0.bin");

function startService(): Promise<{ proc: ChildProcess; port: number }> {
  return new Promise((resolve, reject) => {
    const proc = spawn(
      "python3",
      ["-m", "tendonplan.service", "--roadmap", ROADMAP, "--scene", "empty"],
      { cwd: REPO },
    );
    let buf = "";
    proc.stdout.on("data", (chunk) => {
      buf += String(chunk);
      const m = buf.match(/listening on [\d.]+:(\d+)/);
      if (m) resolve({ proc, port: Number(m[1]) });
    });
    proc.on("error", reject);
    proc.on("exit", (code) =>
      reject(new Error(`service exited early with code ${code}`)),
    );
  });
}

describe.skipIf(!existsSync(ROADMAP))("live service round trip", () => {
  let proc: ChildProcess;
  let client: SessionClient;

  beforeAll(async () => {
    const started = await startService();
    proc = started.proc;
    proc.removeAllListeners("exit");
    client = new SessionClient(
      await TcpTransport.connect("127.0.0.1", started.port),
    );
  }, 120_000);

  afterAll(() => {
    client?.close();
    proc?.kill();
  });

  it(
    "streams 50 goals with monotone seq, continuity, and matching animation endpoints",
    async () => {
      const scene = await client.getScene();
      expect(scene.tip_cloud_mm.length).toBeGreaterThan(0);

      const goals: Vec3[] = [];
      for (let i = 0; i < 50; i++) {
        const base = scene.tip_cloud_mm[i % scene.tip_cloud_mm.length];
        const jitter = ((i * 37) % 11) / 10 - 0.5; // deterministic, +-0.5 mm
        goals.push([base[0] + jitter, base[1] - jitter, base[2] + jitter]);
      }

      const plans: PlanResultMessage[] = [];
      let lastSeq = scene.seq;
      for (const g of goals) {
        // the service frees its planning slot just after replying, so a
        // tight loop can race it: busy means retry, per the protocol
        let plan: PlanResultMessage;
        for (;;) {
          try {
            plan = await client.setGoal(g);
            break;
          } catch (err) {
            if (!(err instanceof BusyError)) throw err;
            await new Promise((ok) => setTimeout(ok, 20));
          }
        }
        expect(plan.seq).toBeGreaterThan(lastSeq);
        lastSeq = plan.seq;
        plans.push(plan);
      }
      expect(plans).toHaveLength(50);

      for (let i = 1; i < plans.length; i++) {
        expect(plans[i].waypoints[0]).toEqual(
          plans[i - 1].waypoints[plans[i - 1].waypoints.length - 1],
        );
      }

      for (const plan of plans) {
        validatePlan(plan);
        const anim = new PlanAnimator(plan.polylines);
        const n = Math.max(...plan.polylines.map((p) => p.length));
        expect(anim.frameAt(0)).toEqual(resample(plan.polylines[0], n));
        expect(anim.frameAt(anim.frameCount - 1)).toEqual(
          resample(plan.polylines[plan.polylines.length - 1], n),
        );
        // the rendered final tip lands on the reported tip (marker size)
        const tip = anim.finalTip;
        const d = Math.hypot(
          tip[0] - plan.tip[0],
          tip[1] - plan.tip[1],
          tip[2] - plan.tip[2],
        );
        expect(d).toBeLessThan(1.5);
      }
    },
    300_000,
  );
});
