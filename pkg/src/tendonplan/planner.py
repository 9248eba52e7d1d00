"""Graph search over the roadmap with lazy edge evaluation, and the
supervisory goal-to-plan loop."""

from __future__ import annotations

import heapq
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import voxel
from .edges import voxelize_free_edge
from .ik import roadmap_ik
from .roadmap import STATUS_CHECKED, STATUS_LAZY, Roadmap
from .robot import Configuration, config_distance
from .voxel import SparseVoxelGrid


@dataclass
class Plan:
    """Sequence of roadmap configurations joined by checked-free edges."""

    waypoints: list                 # Configurations, start first
    tip: np.ndarray                 # endpoint tip position, mm
    tip_error: float
    timings: dict = field(default_factory=dict)  # ik / search / total, s
    vertex_ids: list = field(default_factory=list)

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write("format: tendonplan-plan-v1\n")
        buf.write("tip_mm: " + " ".join(repr(float(x)) for x in self.tip)
                  + "\n")
        buf.write(f"tip_error_mm: {self.tip_error!r}\n")
        for key in ("ik", "search", "total"):
            if key in self.timings:
                buf.write(f"time_{key}_s: {self.timings[key]!r}\n")
        for q in self.waypoints:
            buf.write("waypoint: "
                      + " ".join(repr(float(x)) for x in q.as_array()) + "\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "Plan":
        tip = None
        err = None
        timings = {}
        waypoints = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition(":")
            key = key.strip()
            val = val.strip()
            if key == "format":
                if val != "tendonplan-plan-v1":
                    raise ValueError("unrecognized plan format")
            elif key == "tip_mm":
                tip = np.array([float(x) for x in val.split()])
            elif key == "tip_error_mm":
                err = float(val)
            elif key.startswith("time_") and key.endswith("_s"):
                timings[key[5:-2]] = float(val)
            elif key == "waypoint":
                waypoints.append(Configuration.from_array(
                    np.array([float(x) for x in val.split()])))
        if tip is None or err is None or not waypoints:
            raise ValueError("incomplete plan record")
        return cls(waypoints, tip, err, timings)


class SearchFailure(Exception):
    """No path between the requested vertices survives lazy checking."""


def _shortest_path(rm: Roadmap, start: int, goal: int):
    """A* over live edges, guided by configuration-space distance to the
    goal vertex.  The heuristic is the same metric as the edge weights,
    hence consistent, so the first settled path is optimal.

    Returns (vertex path, edge-id path) or None.
    """
    goal_cfg = rm.vertices[goal].config
    dist = {start: 0.0}
    prev: dict[int, tuple] = {}
    hcache = {start: config_distance(rm.vertices[start].config, goal_cfg)}
    heap = [(hcache[start], start)]
    done = set()
    edges = rm.edges
    adj = rm.adj
    verts = rm.vertices
    inf = np.inf
    while heap:
        f, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == goal:
            break
        done.add(u)
        d = dist[u]
        for eid in adj[u]:
            e = edges[eid]
            v = e.v if e.u == u else e.u
            if v in done:
                continue
            w = e.weight
            if w is None:
                # repeated searches dominate streamed sessions, so edge
                # lengths are cached on first touch
                w = config_distance(verts[e.u].config, verts[e.v].config)
                e.weight = w
            nd = d + w
            if nd < dist.get(v, inf):
                dist[v] = nd
                prev[v] = (u, eid)
                h = hcache.get(v)
                if h is None:
                    h = config_distance(verts[v].config, goal_cfg)
                    hcache[v] = h
                heapq.heappush(heap, (nd + h, v))
    if goal != start and goal not in prev:
        return None
    path = [goal]
    eids = []
    while path[-1] != start:
        u, eid = prev[path[-1]]
        path.append(u)
        eids.append(eid)
    path.reverse()
    eids.reverse()
    return path, eids


def astar_lazy(rm: Roadmap, start: int, goal: int,
               env: SparseVoxelGrid) -> Plan:
    """Shortest path whose lazy edges are validated on demand.

    Candidate paths are re-searched after each colliding lazy edge is
    removed; removal is permanent for the session.  Fully swept partial
    edges are discarded (only whole free edges are kept).
    """
    while True:
        found = _shortest_path(rm, start, goal)
        if found is None:
            raise SearchFailure(
                f"no surviving path from vertex {start} to {goal}")
        path, eids = found
        ok = True
        for eid in eids:
            e = rm.edges[eid]
            if e.status != STATUS_LAZY:
                continue
            ev = voxelize_free_edge(rm.spec, rm.vertices[e.u].config,
                                    rm.vertices[e.v].config, env)
            if ev.reached.key() == rm.vertices[e.v].config.key():
                e.status = STATUS_CHECKED
                e.vox = ev.swept
            else:
                rm.remove_edge(eid)
                ok = False
                break
        if ok:
            waypoints = [rm.vertices[v].config for v in path]
            tip = rm.vertices[goal].tip
            return Plan(waypoints, np.asarray(tip, dtype=float), 0.0,
                        vertex_ids=list(path))


class SimulatedExecutor:
    """Default plan executor: applies the motion instantly and records it."""

    def __init__(self):
        self.trajectory: list = []

    def execute(self, plan: Plan):
        self.trajectory.extend(plan.waypoints)


class PlannerSession:
    """Owns a pruned roadmap and answers streamed tip goals with plans
    that each start where the previous one ended."""

    def __init__(self, rm: Roadmap, env: SparseVoxelGrid,
                 start_vertex: int = 0, k_ik: int = 5,
                 threshold: float = 0.5, executor=None):
        if rm.num_vertices == 0:
            raise ValueError("roadmap is empty")
        self.roadmap = rm
        self.env = env
        self.k_ik = k_ik
        self.threshold = threshold
        self.executor = executor if executor is not None \
            else SimulatedExecutor()
        self.current_vertex = start_vertex
        self.failures = 0

    @property
    def q_current(self) -> Configuration:
        return self.roadmap.vertices[self.current_vertex].config

    def supervisory_step(self, g) -> Plan:
        """One goal-to-plan cycle: IK onto the roadmap, lazy search from
        the current vertex, execute, advance."""
        t0 = time.perf_counter()
        res = roadmap_ik(self.roadmap, self.k_ik, g, self.threshold,
                         self.env)
        t1 = time.perf_counter()
        try:
            plan = astar_lazy(self.roadmap, self.current_vertex,
                              res.vertex_id, self.env)
        except SearchFailure:
            self.failures += 1
            raise
        t2 = time.perf_counter()
        plan.tip = res.tip
        plan.tip_error = res.tip_error
        plan.timings = {"ik": t1 - t0, "search": t2 - t1, "total": t2 - t0}
        self.executor.execute(plan)
        self.current_vertex = plan.vertex_ids[-1]
        return plan


def plan_swept_volume(rm: Roadmap, plan: Plan,
                      env: SparseVoxelGrid) -> SparseVoxelGrid:
    """Concatenated swept voxelization of a plan's edges (plus the start
    vertex backbone), recomputing any edge without a cached sweep."""
    out = rm.grid.empty_like()
    ids = plan.vertex_ids
    first = rm.vertices[ids[0]]
    if first.vox is not None:
        voxel.union_into(out, first.vox)
    for a, b in zip(ids, ids[1:]):
        eid = next(e for e, v in rm.neighbors(a) if v == b)
        e = rm.edges[eid]
        vox = e.vox
        if vox is None:
            ev = voxelize_free_edge(rm.spec, rm.vertices[e.u].config,
                                    rm.vertices[e.v].config, env)
            vox = ev.swept
        voxel.union_into(out, vox)
    return out
