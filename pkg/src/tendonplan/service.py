"""Long-lived planning service: accepts streamed tip goals over a local
socket and answers each with a collision-free plan.

Wire format: 4-byte little-endian length prefix followed by a UTF-8 JSON
object.  Every message carries a schema version field "v" (currently 1)
and a "type".  Client -> server types: set_goal {x, y, z mm, optional
full_polylines}, get_scene {}.  Server -> client types (each with a
monotonically increasing "seq"): plan_result, scene, busy, error.

One goal is in flight at a time; a set_goal arriving while planning is
rejected with a busy message.  An optional replay log records every
message as JSON lines ({"dir": "recv"|"send", "msg": ...}).
"""

from __future__ import annotations

import json
import math
import socket
import struct
import threading

import numpy as np

from .environment import AnatomyEnvironment
from .kinematics import forward_kinematics
from .planner import PlannerSession, SearchFailure

PROTOCOL_VERSION = 1
MAX_POLYLINE_POINTS = 64
MAX_TIP_CLOUD = 2000
_LEN = struct.Struct("<I")
_MAX_MESSAGE = 64 * 1024 * 1024


def send_message(sock: socket.socket, msg: dict):
    data = json.dumps(msg).encode()
    sock.sendall(_LEN.pack(len(data)) + data)


def recv_message(sock: socket.socket):
    """One length-prefixed JSON message, or None on a clean close."""
    header = _recv_exact(sock, _LEN.size)
    if header is None:
        return None
    (n,) = _LEN.unpack(header)
    if n > _MAX_MESSAGE:
        raise ValueError("message too large")
    data = _recv_exact(sock, n)
    if data is None:
        return None
    return json.loads(data.decode())


def _recv_exact(sock, n):
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def downsample_polyline(points: np.ndarray,
                        max_points: int = MAX_POLYLINE_POINTS) -> np.ndarray:
    """At most max_points rows, always keeping the first and last."""
    m = points.shape[0]
    if m <= max_points:
        return points
    idx = np.round(np.linspace(0, m - 1, max_points)).astype(int)
    return points[idx]


def surface_voxels(g) -> np.ndarray:
    """Occupied voxels with at least one empty 6-neighbor (grid boundary
    counts as empty), as an (n, 3) index array."""
    occ = g.to_dense()
    interior = np.ones_like(occ)
    for axis in range(3):
        for shift in (1, -1):
            nb = np.zeros_like(occ)
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            if shift > 0:
                src[axis] = slice(1, None)
                dst[axis] = slice(None, -1)
            else:
                src[axis] = slice(None, -1)
                dst[axis] = slice(1, None)
            nb[tuple(dst)] = occ[tuple(src)]
            interior &= nb
    return np.argwhere(occ & ~interior)


class SessionService:
    """Owns one planner session; thread-safe response sequencing."""

    def __init__(self, session: PlannerSession, env: AnatomyEnvironment,
                 replay_path=None):
        self.session = session
        self.env = env
        self._seq = 0
        self._seq_lock = threading.Lock()
        self._send_lock = threading.Lock()
        self._planning = threading.Lock()
        self._replay = open(replay_path, "w") if replay_path else None
        self._replay_lock = threading.Lock()
        self.history: list = []  # (goal, plan) pairs, append-only
        self._scene_cache = None

    def close(self):
        if self._replay:
            self._replay.close()
            self._replay = None

    def _next_seq(self) -> int:
        with self._seq_lock:
            self._seq += 1
            return self._seq

    def _log(self, direction: str, msg: dict):
        if self._replay is None:
            return
        with self._replay_lock:
            self._replay.write(json.dumps({"dir": direction, "msg": msg})
                               + "\n")
            self._replay.flush()

    def _send(self, sock, msg: dict):
        msg["v"] = PROTOCOL_VERSION
        msg["seq"] = self._next_seq()
        self._log("send", msg)
        with self._send_lock:
            send_message(sock, msg)

    # -- message handlers ------------------------------------------------

    def handle_connection(self, sock: socket.socket):
        """Read messages until the peer closes; planning runs on a worker
        thread so concurrent set_goals can be rejected as busy."""
        try:
            while True:
                try:
                    msg = recv_message(sock)
                except (ValueError, json.JSONDecodeError) as exc:
                    self._send(sock, {"type": "error",
                                      "message": f"bad message: {exc}"})
                    continue
                if msg is None:
                    return
                self._log("recv", msg)
                self.dispatch(sock, msg)
        finally:
            sock.close()

    def dispatch(self, sock, msg):
        if not isinstance(msg, dict) or "type" not in msg:
            self._send(sock, {"type": "error",
                              "message": "message must be an object with "
                                         "a 'type' field"})
            return
        mtype = msg["type"]
        if mtype == "set_goal":
            self._handle_set_goal(sock, msg)
        elif mtype == "get_scene":
            self._send(sock, {"type": "scene", **self.scene_snapshot()})
        else:
            self._send(sock, {"type": "error",
                              "message": f"unknown message type {mtype!r}"})

    def _handle_set_goal(self, sock, msg):
        try:
            goal = [float(msg["x"]), float(msg["y"]), float(msg["z"])]
            if not all(math.isfinite(v) for v in goal):
                raise ValueError("goal coordinates must be finite")
        except (KeyError, TypeError, ValueError) as exc:
            self._send(sock, {"type": "error",
                              "message": f"malformed goal: {exc}"})
            return
        if not self._planning.acquire(blocking=False):
            self._send(sock, {"type": "busy"})
            return
        full = bool(msg.get("full_polylines", False))

        def run():
            try:
                try:
                    plan = self.session.supervisory_step(goal)
                except SearchFailure as exc:
                    self._send(sock, {"type": "error",
                                      "message": f"planning failed: {exc}"})
                    return
                reply = self._plan_message(goal, plan, full)
                self.history.append((goal, plan))
                self._send(sock, reply)
            except Exception as exc:  # session must survive internal errors
                self._send(sock, {"type": "error",
                                  "message": f"internal error: {exc}"})
            finally:
                self._planning.release()

        threading.Thread(target=run, daemon=True).start()

    def _plan_message(self, goal, plan, full: bool) -> dict:
        spec = self.session.roadmap.spec
        polylines = []
        for q in plan.waypoints:
            pts = forward_kinematics(spec, q).positions
            if not full:
                pts = downsample_polyline(pts)
            polylines.append(np.round(pts, 6).tolist())
        return {
            "type": "plan_result",
            "goal": goal,
            "waypoints": [q.as_array().tolist() for q in plan.waypoints],
            "polylines": polylines,
            "tip": np.asarray(plan.tip, dtype=float).tolist(),
            "tip_error_mm": plan.tip_error,
            "timings_s": dict(plan.timings),
        }

    def scene_snapshot(self) -> dict:
        if self._scene_cache is None:
            env = self.env
            surf = surface_voxels(env.raw)
            tips = [v.tip.tolist()
                    for v in self.session.roadmap.vertices[:MAX_TIP_CLOUD]]
            lo, hi = env.workspace_box
            self._scene_cache = {
                "dims": list(env.raw.dims),
                "spacing_mm": list(env.raw.spacing),
                "origin_mm": list(env.raw.origin),
                "surface_voxels": surf.tolist(),
                "insertion": {
                    "position_mm": list(env.insertion.position),
                    "direction": list(env.insertion.direction),
                },
                "workspace_box_mm": {"min": list(lo), "max": list(hi)},
                "tip_cloud_mm": tips,
            }
        return self._scene_cache


def serve(service: SessionService, host: str = "127.0.0.1",
          port: int = 0, ready=None):
    """Accept loop handling one client at a time.  Calls ready(port) once
    listening; runs until the listening socket is closed."""
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(1)
    if ready is not None:
        ready(srv.getsockname()[1])
    try:
        while True:
            conn, _ = srv.accept()
            service.handle_connection(conn)
    except OSError:
        pass  # listener closed
    finally:
        srv.close()


def main(argv=None) -> int:
    import argparse

    from . import environment, roadmap as roadmap_mod
    from .robot import RobotSpec, evaluation_preset

    p = argparse.ArgumentParser(
        prog="tendonplan-service",
        description="Socket service answering streamed tip goals with plans")
    p.add_argument("--spec", default="preset")
    p.add_argument("--roadmap", required=True)
    p.add_argument("--scene", default="shell",
                   help="built-in scene: shell, wall, corridor, plate, "
                        "empty")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--replay", default=None)
    p.add_argument("--k-ik", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.5)
    args = p.parse_args(argv)

    spec = evaluation_preset() if args.spec == "preset" \
        else RobotSpec.load(args.spec)
    maker = {"shell": environment.shell_scene,
             "wall": environment.wall_scene,
             "corridor": environment.corridor_scene,
             "plate": environment.plate_scene,
             "empty": environment.empty_scene}[args.scene]
    env = maker()
    rm = roadmap_mod.load_pruned(args.roadmap, env.dilated, spec)
    session = PlannerSession(rm, env.dilated, k_ik=args.k_ik,
                             threshold=args.threshold)
    # the loaded roadmap is a large, mostly static object graph; keeping
    # it out of generational GC avoids collector pauses mid-plan
    import gc
    gc.collect()
    gc.freeze()
    service = SessionService(session, env, replay_path=args.replay)
    serve(service, args.host, args.port,
          ready=lambda port: print(f"listening on {args.host}:{port}",
                                   flush=True))
    return 0


if __name__ == "__main__":
    import sys

    sys.exit(main())
