"""Roadmap construction (sampling, PRM*-style connection, edge
voxelization), binary serialization, and load-time pruning."""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from . import voxel
from .collision import self_collides, voxelize_backbone
from .edges import DEFAULT_DELTA, voxelize_edge_unconstrained
from .kinematics import forward_kinematics
from .robot import (
    DEFAULT_WEIGHTS,
    Configuration,
    RobotSpec,
    sample_config,
    within_limits,
)
from .voxel import SparseVoxelGrid

STATUS_PRECOMPUTED = 0  # voxelization cached (and env-checked after Load)
STATUS_LAZY = 1         # not yet collision-checked against the environment
STATUS_CHECKED = 2      # checked free at planning time

_MAGIC = b"TPRMAP1\x00"
_HEADER = struct.Struct("<8sIQ I 3I6d Q II 6d II")


@dataclass
class Vertex:
    config: Configuration
    tip: np.ndarray
    vox: SparseVoxelGrid | None = None


@dataclass
class Edge:
    u: int
    v: int
    vox: SparseVoxelGrid | None = None
    status: int = STATUS_PRECOMPUTED
    weight: float | None = None  # cached config-space length


def prm_star_k(n: int, dim: int) -> int:
    """k-nearest rule k(n) = ceil(e (1 + 1/d) ln n)."""
    if n < 2:
        return 0
    return math.ceil(math.e * (1.0 + 1.0 / dim) * math.log(n))


class Roadmap:
    """Undirected graph of free configurations with cached tip positions
    and (optionally) cached voxelizations."""

    def __init__(self, spec: RobotSpec, grid: SparseVoxelGrid, meta=None):
        self.spec = spec
        self.grid = grid  # empty grid fixing the voxel frame
        self.meta = dict(meta or {})
        self.vertices: list[Vertex] = []
        self.edges: list[Edge] = []
        self.adj: dict[int, list[int]] = {}
        self._cfg_rows: list[np.ndarray] = []
        self._tip_rows: list[np.ndarray] = []

    # -- construction ----------------------------------------------------

    def add_vertex(self, config: Configuration, tip, vox=None) -> int:
        vid = len(self.vertices)
        tip = np.asarray(tip, dtype=float)
        self.vertices.append(Vertex(config, tip, vox))
        self.adj[vid] = []
        self._cfg_rows.append(config.as_array())
        self._tip_rows.append(tip)
        return vid

    def add_edge(self, u: int, v: int, vox=None,
                 status: int = STATUS_PRECOMPUTED) -> int:
        if u == v:
            raise ValueError("self-loop edge")
        eid = len(self.edges)
        self.edges.append(Edge(u, v, vox, status))
        self.adj[u].append(eid)
        self.adj[v].append(eid)
        return eid

    def remove_edge(self, eid: int):
        e = self.edges[eid]
        if e is None:
            return
        self.adj[e.u].remove(eid)
        self.adj[e.v].remove(eid)
        self.edges[eid] = None

    def neighbors(self, u: int):
        """Yield (edge id, other vertex id) pairs for live edges at u."""
        for eid in self.adj[u]:
            e = self.edges[eid]
            yield eid, (e.v if e.u == u else e.u)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return sum(1 for e in self.edges if e is not None)

    # -- nearest neighbors ------------------------------------------------

    def _config_matrix(self) -> np.ndarray:
        return np.array(self._cfg_rows) if self._cfg_rows else \
            np.empty((0, self.spec.config_dim))

    def _tip_matrix(self) -> np.ndarray:
        return np.array(self._tip_rows) if self._tip_rows else \
            np.empty((0, 3))

    def config_distances(self, q: Configuration,
                         weights=DEFAULT_WEIGHTS) -> np.ndarray:
        mat = self._config_matrix()
        return _weighted_distances(q.as_array(), mat, weights)

    def k_nearest_configs(self, q: Configuration, k: int,
                          weights=DEFAULT_WEIGHTS,
                          exclude: int | None = None) -> np.ndarray:
        d = self.config_distances(q, weights)
        if exclude is not None:
            d[exclude] = np.inf
        k = min(k, d.shape[0])
        order = np.argsort(d, kind="stable")
        return order[:k]

    def k_nearest_tips(self, p, k: int) -> np.ndarray:
        tips = self._tip_matrix()
        d = np.linalg.norm(tips - np.asarray(p, dtype=float), axis=1)
        k = min(k, d.shape[0])
        return np.argsort(d, kind="stable")[:k]

    def connected_components(self) -> list[list[int]]:
        parent = list(range(self.num_vertices))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in self.edges:
            if e is None:
                continue
            ru, rv = find(e.u), find(e.v)
            if ru != rv:
                parent[ru] = rv
        groups: dict[int, list[int]] = {}
        for v in range(self.num_vertices):
            groups.setdefault(find(v), []).append(v)
        return sorted(groups.values(), key=len, reverse=True)


def _weighted_distances(row: np.ndarray, mat: np.ndarray,
                        weights) -> np.ndarray:
    if mat.shape[0] == 0:
        return np.empty(0)
    w_t, w_rot, w_ret = weights
    dt = mat[:, :-2] - row[:-2]
    drot = (mat[:, -2] - row[-2]) % (2.0 * math.pi)
    drot = np.where(drot > math.pi, 2.0 * math.pi - drot, drot)
    dret = mat[:, -1] - row[-1]
    return np.sqrt((dt * dt).sum(axis=1) * w_t ** 2
                   + (w_rot * drot) ** 2 + (w_ret * dret) ** 2)


# -- Precompute phase ---------------------------------------------------


def _vertex_is_valid(spec, q, shape) -> bool:
    return (shape.converged and within_limits(q, shape, spec)
            and not self_collides(shape, spec))


def precompute(spec: RobotSpec, n_r: int, seed: int, grid: SparseVoxelGrid,
               workers: int = 1, weights=DEFAULT_WEIGHTS,
               delta=DEFAULT_DELTA, k_n: int | None = None,
               progress=None) -> Roadmap:
    """Build an environment-agnostic roadmap: sample n_r valid vertices,
    connect PRM*-style k nearest neighbors, voxelize vertices and edges.

    Deterministic for a fixed seed regardless of worker count (samples are
    drawn sequentially; edge results are ordered by edge index).
    """
    if n_r < 2:
        raise ValueError("n_r must be at least 2")
    rng = np.random.default_rng(seed)
    if k_n is None:
        k_n = prm_star_k(n_r, spec.config_dim)
    meta = {
        "spec_hash": spec.content_hash(),
        "seed": int(seed),
        "n_r": int(n_r),
        "k_n": int(k_n),
        "weights": tuple(float(w) for w in weights),
        "delta": tuple(float(d) for d in delta),
    }
    rm = Roadmap(spec, grid.empty_like(), meta)

    attempts = 0
    accepted = 0
    while accepted < n_r:
        q = sample_config(rng, spec)
        attempts += 1
        if attempts % 5000 == 0 and accepted / attempts < 1e-3:
            raise RuntimeError(
                f"sampling starvation: {accepted}/{attempts} accepted")
        shape = forward_kinematics(spec, q)
        if not _vertex_is_valid(spec, q, shape):
            continue
        try:
            vox = voxelize_backbone(shape, grid)
        except ValueError:
            continue  # backbone exits the grid: cannot cache, reject
        rm.add_vertex(q, shape.positions[-1], vox)
        accepted += 1
        if progress and accepted % 500 == 0:
            progress(f"sampled {accepted}/{n_r} ({attempts} attempts)")
    rm.meta["sample_attempts"] = attempts

    # candidate undirected k-nearest edges
    mat = rm._config_matrix()
    pairs = set()
    k_eff = min(k_n, n_r - 1)
    for i in range(n_r):
        d = _weighted_distances(mat[i], mat, weights)
        d[i] = np.inf
        nn = np.argsort(d, kind="stable")[:k_eff]
        for j in nn:
            pairs.add((min(i, int(j)), max(i, int(j))))
    pairs = sorted(pairs)

    if workers > 1:
        results = _voxelize_edges_parallel(spec, grid, delta, rm, pairs,
                                           workers, progress)
    else:
        results = _voxelize_edges_serial(spec, grid, delta, rm, pairs,
                                         progress)
    for (u, v), ev in zip(pairs, results):
        if ev is None:
            continue
        rm.add_edge(u, v, ev, STATUS_PRECOMPUTED)
    return rm


def _voxelize_edges_serial(spec, grid, delta, rm, pairs, progress):
    results = []
    for n, (u, v) in enumerate(pairs):
        ev = voxelize_edge_unconstrained(
            spec, rm.vertices[u].config, rm.vertices[v].config, grid, delta)
        ok = ev.reached.key() == rm.vertices[v].config.key()
        results.append(ev.swept if ok else None)
        if progress and (n + 1) % 500 == 0:
            progress(f"voxelized {n + 1}/{len(pairs)} edges")
    return results


_POOL_STATE: dict = {}


def _pool_init(spec_text, dims, spacing, origin, delta):
    _POOL_STATE["spec"] = RobotSpec.loads(spec_text)
    _POOL_STATE["grid"] = SparseVoxelGrid(dims, spacing, origin)
    _POOL_STATE["delta"] = delta


def _pool_edge(task):
    qa_arr, qb_arr = task
    spec = _POOL_STATE["spec"]
    ev = voxelize_edge_unconstrained(
        spec, Configuration.from_array(qa_arr),
        Configuration.from_array(qb_arr), _POOL_STATE["grid"],
        _POOL_STATE["delta"])
    ok = ev.reached.key() == Configuration.from_array(qb_arr).key()
    return voxel.serialize(ev.swept) if ok else None


def _voxelize_edges_parallel(spec, grid, delta, rm, pairs, workers,
                             progress):
    import multiprocessing as mp

    tasks = [(rm.vertices[u].config.as_array(),
              rm.vertices[v].config.as_array()) for u, v in pairs]
    ctx = mp.get_context("fork")
    with ctx.Pool(workers, initializer=_pool_init,
                  initargs=(spec.dumps(), grid.dims, grid.spacing,
                            grid.origin, delta)) as pool:
        raw = pool.map(_pool_edge, tasks, chunksize=16)
    return [None if b is None else voxel.deserialize(b) for b in raw]


# -- serialization ------------------------------------------------------


def save(rm: Roadmap, path, include_vertex_vox: bool = True,
         include_edge_vox: bool = True):
    """Binary roadmap file; vertex/edge voxel payloads individually
    optional and length-prefixed so loading can skip them cheaply."""
    live_edges = [e for e in rm.edges if e is not None]
    meta = rm.meta
    dims = rm.grid.dims
    header = _HEADER.pack(
        _MAGIC, 1, meta.get("spec_hash", 0), rm.spec.config_dim,
        *dims, *rm.grid.spacing, *rm.grid.origin,
        meta.get("seed", 0), meta.get("n_r", 0), meta.get("k_n", 0),
        *meta.get("weights", (0.0,) * 3), *meta.get("delta", (0.0,) * 3),
        rm.num_vertices, len(live_edges))
    with open(path, "wb") as f:
        f.write(header)
        for vtx in rm.vertices:
            f.write(vtx.config.as_array().tobytes())
            f.write(vtx.tip.astype(float).tobytes())
        for vtx in rm.vertices:
            _write_vox(f, vtx.vox if include_vertex_vox else None)
        for e in live_edges:
            f.write(struct.pack("<II", e.u, e.v))
        for e in live_edges:
            _write_vox(f, e.vox if include_edge_vox else None)


def _write_vox(f, vox):
    if vox is None:
        f.write(struct.pack("<I", 0))
    else:
        blob = voxel.serialize(vox)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)


class _Reader:
    def __init__(self, f):
        self.f = f

    def read(self, n) -> bytes:
        data = self.f.read(n)
        if len(data) != n:
            raise ValueError("truncated roadmap file")
        return data

    def skip(self, n):
        self.f.seek(n, 1)


def _read_header(r: _Reader, spec: RobotSpec):
    fields = _HEADER.unpack(r.read(_HEADER.size))
    if fields[0] != _MAGIC:
        raise ValueError("bad roadmap magic")
    if fields[1] != 1:
        raise ValueError(f"unsupported roadmap version {fields[1]}")
    spec_hash = fields[2]
    cfg_dim = fields[3]
    if cfg_dim != spec.config_dim:
        raise ValueError("roadmap configuration dimension does not match "
                         "the robot spec")
    if spec_hash != spec.content_hash():
        warnings.warn("roadmap was built for a different robot spec "
                      "(content hash mismatch)")
    dims = fields[4:7]
    spacing = fields[7:10]
    origin = fields[10:13]
    meta = {
        "spec_hash": spec_hash,
        "seed": fields[13],
        "n_r": fields[14],
        "k_n": fields[15],
        "weights": fields[16:19],
        "delta": fields[19:22],
    }
    n_vertices = fields[22]
    n_edges = fields[23]
    grid = SparseVoxelGrid(dims, spacing, origin)
    return grid, meta, n_vertices, n_edges


def load_raw(path, spec: RobotSpec) -> Roadmap:
    with open(path, "rb") as f:
        r = _Reader(f)
        grid, meta, n_vertices, n_edges = _read_header(r, spec)
        rm = Roadmap(spec, grid, meta)
        cfg_dim = spec.config_dim
        for _ in range(n_vertices):
            arr = np.frombuffer(r.read(8 * cfg_dim), dtype=float)
            tip = np.frombuffer(r.read(24), dtype=float).copy()
            rm.add_vertex(Configuration.from_array(arr), tip)
        for vid in range(n_vertices):
            rm.vertices[vid].vox = _read_vox(r)
        pairs = []
        for _ in range(n_edges):
            u, v = struct.unpack("<II", r.read(8))
            pairs.append((u, v))
        for u, v in pairs:
            rm.add_edge(u, v, _read_vox(r), STATUS_PRECOMPUTED)
    return rm


def _read_vox(r: _Reader):
    (n,) = struct.unpack("<I", r.read(4))
    if n == 0:
        return None
    return voxel.deserialize(r.read(n))


def load_pruned(path, env: SparseVoxelGrid, spec: RobotSpec,
                check_edges: bool = True) -> Roadmap:
    """Stream the file, dropping vertices/edges that collide with the
    dilated environment, then keep only the largest connected component.

    With check_edges=False cached edge voxelizations are not tested (nor
    retained); surviving edges are marked lazy for planning-time checks.
    Dropped payloads are skipped without materializing grids.
    """
    with open(path, "rb") as f:
        r = _Reader(f)
        grid, meta, n_vertices, n_edges = _read_header(r, spec)
        if not grid.same_frame(env):
            raise ValueError("environment frame does not match the roadmap "
                             "voxel frame")
        configs = []
        tips = []
        cfg_dim = spec.config_dim
        for _ in range(n_vertices):
            arr = np.frombuffer(r.read(8 * cfg_dim), dtype=float)
            tips.append(np.frombuffer(r.read(24), dtype=float).copy())
            configs.append(Configuration.from_array(arr))
        keep_vox: dict[int, SparseVoxelGrid] = {}
        alive = np.zeros(n_vertices, dtype=bool)
        for vid in range(n_vertices):
            vox = _read_vox(r)
            if vox is None:
                # no cached voxelization: recompute from kinematics
                shape = forward_kinematics(spec, configs[vid])
                if not shape.converged:
                    continue
                try:
                    vox = voxelize_backbone(shape, grid)
                except ValueError:
                    continue
            if not voxel.collides(vox, env):
                alive[vid] = True
                keep_vox[vid] = vox
        pairs = []
        for _ in range(n_edges):
            u, v = struct.unpack("<II", r.read(8))
            pairs.append((u, v))
        live_edges = []
        for u, v in pairs:
            (n_bytes,) = struct.unpack("<I", r.read(4))
            if not (alive[u] and alive[v]):
                r.skip(n_bytes)
                continue
            if not check_edges:
                r.skip(n_bytes)
                live_edges.append((u, v, None, STATUS_LAZY))
                continue
            if n_bytes == 0:
                # no cached sweep to test: leave for lazy evaluation
                live_edges.append((u, v, None, STATUS_LAZY))
                continue
            vox = voxel.deserialize(r.read(n_bytes))
            if voxel.collides(vox, env):
                continue
            live_edges.append((u, v, vox, STATUS_PRECOMPUTED))

    # largest connected component over surviving vertices/edges
    comp = _largest_component(n_vertices, alive, live_edges)
    remap = {}
    rm = Roadmap(spec, grid, meta)
    for vid in sorted(comp):
        remap[vid] = rm.add_vertex(configs[vid], tips[vid], keep_vox[vid])
    for u, v, vox, status in live_edges:
        if u in remap and v in remap:
            rm.add_edge(remap[u], remap[v], vox, status)
    return rm


def _largest_component(n, alive, live_edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v, _vox, _status in live_edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    groups: dict[int, list[int]] = {}
    for vid in range(n):
        if alive[vid]:
            groups.setdefault(find(vid), []).append(vid)
    if not groups:
        return set()
    return set(max(groups.values(), key=len))
