"""Motion validation between configurations: recursive dynamic edge
voxelization and the equally-spaced discrete baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _voxel_core, voxel
from .collision import self_collides
from .kinematics import BackboneShape, forward_kinematics
from .robot import (
    Configuration,
    RobotSpec,
    interpolate_config,
    within_limits,
    wrap_angle_diff,
)
from .voxel import SparseVoxelGrid

# per-subspace discretization thresholds: tension (N), rotation (rad),
# retraction (mm)
DEFAULT_DELTA = (5e-4, 5e-4, 5e-3)

_INF = float("inf")


@dataclass
class EdgeVoxelization:
    """Result of sweeping the backbone along one straight edge in Q."""

    reached: Configuration
    swept: SparseVoxelGrid
    fk_calls: int
    checked: list = field(default_factory=list)  # configs tested, in order


def subspace_distances(a: Configuration, b: Configuration):
    """(tension, rotation, retraction) distances, each within its subspace."""
    dt = np.subtract(a.tensions, b.tensions)
    return (float(np.linalg.norm(dt)),
            abs(wrap_angle_diff(a.rotation, b.rotation)),
            abs(a.retraction - b.retraction))


def within_delta(a: Configuration, b: Configuration, delta) -> bool:
    return all(d <= lim for d, lim in zip(subspace_distances(a, b), delta))


def _fractions(shape: BackboneShape) -> np.ndarray:
    s = shape.arclengths
    span = s[-1] - s[0]
    if span <= 0:
        return np.zeros(1)
    return (s - s[0]) / span


def voxel_distance(shape_a: BackboneShape, shape_b: BackboneShape,
                   g: SparseVoxelGrid) -> int:
    """Max voxel-index deviation between two shapes at matched arc fractions.

    The shape with more nodes supplies the normalized arclength fractions;
    the coarser shape is piecewise-linearly interpolated at them.
    """
    return int(_voxel_core.shape_voxel_distance(
        np.ascontiguousarray(shape_a.positions), _fractions(shape_a),
        np.ascontiguousarray(shape_b.positions), _fractions(shape_b),
        g.origin[0], g.origin[1], g.origin[2],
        g.spacing[0], g.spacing[1], g.spacing[2]))


class _Record:
    __slots__ = ("shape", "frac", "ok", "idx")

    def __init__(self, shape):
        self.shape = shape
        self.frac = None
        self.ok = None
        self.idx = None  # backbone voxel indices, (n, 3)


class _EdgeContext:
    """Per-edge FK/validity cache so bisection endpoints are never
    recomputed; fk_calls counts distinct FK evaluations."""

    def __init__(self, spec: RobotSpec, grid: SparseVoxelGrid,
                 env: SparseVoxelGrid | None, delta):
        self.spec = spec
        self.grid = grid
        self.env = env
        self.delta = delta
        self.fk_calls = 0
        self._memo: dict = {}

    def record(self, q: Configuration) -> _Record:
        key = q.key()
        rec = self._memo.get(key)
        if rec is None:
            self.fk_calls += 1
            rec = _Record(forward_kinematics(self.spec, q))
            rec.frac = _fractions(rec.shape)
            self._memo[key] = rec
        return rec

    def check(self, q: Configuration) -> bool:
        """Free-space membership (or validity when no environment)."""
        rec = self.record(q)
        if rec.ok is None:
            rec.ok = self._evaluate(q, rec)
        return rec.ok

    def _evaluate(self, q: Configuration, rec: _Record) -> bool:
        shape = rec.shape
        if not shape.converged or not within_limits(q, shape, self.spec):
            return False
        if self_collides(shape, self.spec):
            return False
        try:
            rec.idx = voxel.voxelize_polyline(self.grid, shape.positions)
        except ValueError:
            return False  # backbone left the grid: cannot certify free
        if self.env is not None and voxel.indices_collide_with(self.env,
                                                               rec.idx):
            return False
        return True

    def idx(self, q: Configuration) -> np.ndarray:
        rec = self.record(q)
        if rec.idx is None:
            rec.idx = voxel.voxelize_polyline(self.grid, rec.shape.positions)
        return rec.idx

    def voxel_distance(self, ra: _Record, rb: _Record) -> float:
        if not (ra.shape.converged and rb.shape.converged):
            return _INF
        g = self.grid
        return _voxel_core.shape_voxel_distance(
            ra.shape.positions, ra.frac, rb.shape.positions, rb.frac,
            g.origin[0], g.origin[1], g.origin[2],
            g.spacing[0], g.spacing[1], g.spacing[2])


def _recurse(ctx: _EdgeContext, qa: Configuration, qb: Configuration,
             checked: list):
    ra = ctx.record(qa)
    rb = ctx.record(qb)
    if within_delta(qa, qb, ctx.delta) or ctx.voxel_distance(ra, rb) <= 1:
        checked.append(qb)
        if ctx.check(qb):
            return qb, [ctx.idx(qa)]
        return qa, []

    qm = interpolate_config(qa, qb, 0.5)
    reached, parts = _recurse(ctx, qa, qm, checked)
    if reached.key() == qm.key():
        reached, parts2 = _recurse(ctx, qm, qb, checked)
        parts += parts2
    return reached, parts


def _finish(ctx: _EdgeContext, qa: Configuration, reached, parts,
            checked) -> EdgeVoxelization:
    parts = parts + [ctx.idx(reached)]
    swept = ctx.grid.empty_like()
    swept.add_voxels(np.vstack(parts))
    return EdgeVoxelization(reached, swept, ctx.fk_calls, [qa] + checked)


def voxelize_free_edge(spec: RobotSpec, q_a: Configuration,
                       q_b: Configuration, env: SparseVoxelGrid,
                       delta=DEFAULT_DELTA) -> EdgeVoxelization:
    """Sweep the backbone from q_a toward q_b, stopping at the first
    collision; returns the last free configuration and the swept voxels.

    q_a must be free.  Recursive bisection terminates when an interval is
    within the per-subspace thresholds or its endpoint shapes are at most
    one voxel apart.
    """
    ctx = _EdgeContext(spec, env, env, delta)
    if not ctx.check(q_a):
        raise ValueError("edge start configuration is not free")
    reached, parts = _recurse(ctx, q_a, q_b, checked := [])
    return _finish(ctx, q_a, reached, parts, checked)


def voxelize_edge_unconstrained(spec: RobotSpec, q_a: Configuration,
                                q_b: Configuration, grid: SparseVoxelGrid,
                                delta=DEFAULT_DELTA) -> EdgeVoxelization:
    """Environment-agnostic variant: checks validity instead of freeness."""
    ctx = _EdgeContext(spec, grid, None, delta)
    if not ctx.check(q_a):
        raise ValueError("edge start configuration is not valid")
    reached, parts = _recurse(ctx, q_a, q_b, checked := [])
    return _finish(ctx, q_a, reached, parts, checked)


def discrete_edge_check(spec: RobotSpec, q_a: Configuration,
                        q_b: Configuration, grid: SparseVoxelGrid,
                        env: SparseVoxelGrid | None = None,
                        step=DEFAULT_DELTA) -> EdgeVoxelization:
    """Equally-spaced baseline at a fixed per-subspace step size."""
    ctx = _EdgeContext(spec, grid, env, step)
    if not ctx.check(q_a):
        raise ValueError("edge start configuration is not free")
    dists = subspace_distances(q_a, q_b)
    n_steps = max(int(np.ceil(d / s - 1e-12)) for d, s in zip(dists, step))
    reached = q_a
    parts = [ctx.idx(q_a)]
    checked = []
    for i in range(1, n_steps + 1):
        q = q_b if i == n_steps else interpolate_config(q_a, q_b, i / n_steps)
        checked.append(q)
        if not ctx.check(q):
            break
        parts.append(ctx.idx(q))
        reached = q
    return _finish(ctx, q_a, reached, parts, checked)
