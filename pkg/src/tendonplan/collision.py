"""Shape validity: capsule self-collision, backbone voxelization, and the
is_valid / is_free predicates."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from . import voxel
from .kinematics import BackboneShape, forward_kinematics
from .robot import Configuration, RobotSpec, within_limits
from .voxel import SparseVoxelGrid


@dataclass(frozen=True)
class Capsule:
    """Cylinder with spherical caps: segment a-b swept by the radius."""

    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")


@numba.njit(cache=True, fastmath=True)
def segment_distance(p0, p1, q0, q1):
    """Minimum distance between segments p0-p1 and q0-q1."""
    dpx = p1[0] - p0[0]
    dpy = p1[1] - p0[1]
    dpz = p1[2] - p0[2]
    dqx = q1[0] - q0[0]
    dqy = q1[1] - q0[1]
    dqz = q1[2] - q0[2]
    rx = p0[0] - q0[0]
    ry = p0[1] - q0[1]
    rz = p0[2] - q0[2]
    a = dpx * dpx + dpy * dpy + dpz * dpz
    e = dqx * dqx + dqy * dqy + dqz * dqz
    f = dqx * rx + dqy * ry + dqz * rz

    if a <= 1e-18 and e <= 1e-18:
        return np.sqrt(rx * rx + ry * ry + rz * rz)
    if a <= 1e-18:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = dpx * rx + dpy * ry + dpz * rz
        if e <= 1e-18:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = dpx * dqx + dpy * dqy + dpz * dqz
            den = a * e - b * b
            if den > 1e-18:
                s = min(max((b * f - c * e) / den, 0.0), 1.0)
            else:
                s = 0.0  # parallel: pick an endpoint, then clamp the other
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    gx = p0[0] + dpx * s - (q0[0] + dqx * t)
    gy = p0[1] + dpy * s - (q0[1] + dqy * t)
    gz = p0[2] + dpz * s - (q0[2] + dqz * t)
    return np.sqrt(gx * gx + gy * gy + gz * gz)


def capsule_distance(c1: Capsule, c2: Capsule) -> float:
    """Surface-to-surface distance; negative when overlapping."""
    d = segment_distance(np.asarray(c1.a, dtype=float),
                         np.asarray(c1.b, dtype=float),
                         np.asarray(c2.a, dtype=float),
                         np.asarray(c2.b, dtype=float))
    return float(d) - c1.radius - c2.radius


@numba.njit(cache=True, fastmath=True)
def _self_collides_core(pos, s, radius):
    m = pos.shape[0]
    skip = 3.0 * radius
    thresh = 2.0 * radius
    # cheap prefilter: segment distance >= start-node distance minus both
    # segment lengths, so far-apart nodes cannot collide
    h_max = 0.0
    for i in range(m - 1):
        dx = pos[i + 1, 0] - pos[i, 0]
        dy = pos[i + 1, 1] - pos[i, 1]
        dz = pos[i + 1, 2] - pos[i, 2]
        h2 = dx * dx + dy * dy + dz * dz
        if h2 > h_max:
            h_max = h2
    cutoff = thresh + 2.0 * np.sqrt(h_max)
    cutoff2 = cutoff * cutoff
    for i in range(m - 1):
        for j in range(i + 1, m - 1):
            if s[j] - s[i + 1] <= skip:
                continue
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            dz = pos[j, 2] - pos[i, 2]
            if dx * dx + dy * dy + dz * dz > cutoff2:
                continue
            d = segment_distance(pos[i], pos[i + 1], pos[j], pos[j + 1])
            if d < thresh:
                return True
    return False


def self_collides(shape: BackboneShape, spec: RobotSpec) -> bool:
    """Capsule chain self-test: far pairs (arclength gap > 3*radius along
    the backbone) closer than the body diameter collide."""
    if not shape.converged:
        raise ValueError("self-collision test on a non-converged shape")
    if shape.num_nodes < 2:
        return False
    return bool(_self_collides_core(
        np.ascontiguousarray(shape.positions),
        np.ascontiguousarray(shape.arclengths), spec.radius))


def backbone_capsules(shape: BackboneShape, spec: RobotSpec) -> list:
    return [Capsule(shape.positions[i].copy(), shape.positions[i + 1].copy(),
                    spec.radius) for i in range(shape.num_nodes - 1)]


def voxelize_backbone(shape: BackboneShape,
                      g: SparseVoxelGrid) -> SparseVoxelGrid:
    """Voxelize the centerline polyline into a fresh grid sharing g's frame."""
    out = g.empty_like()
    idx = voxel.voxelize_polyline(out, shape.positions)
    out.add_voxels(idx)
    return out


def env_collides(shape_vox: SparseVoxelGrid,
                 dilated_env: SparseVoxelGrid) -> bool:
    return voxel.collides(shape_vox, dilated_env)


def shape_is_valid(spec: RobotSpec, q: Configuration,
                   shape: BackboneShape) -> bool:
    """Validity of an already-computed shape: convergence, actuation
    limits, and self-collision freedom."""
    return (shape.converged and within_limits(q, shape, spec)
            and not self_collides(shape, spec))


def is_valid(spec: RobotSpec, q: Configuration) -> bool:
    return shape_is_valid(spec, q, forward_kinematics(spec, q))


def is_free(spec: RobotSpec, q: Configuration,
            dilated_env: SparseVoxelGrid) -> bool:
    shape = forward_kinematics(spec, q)
    if not shape_is_valid(spec, q, shape):
        return False
    return not env_collides(voxelize_backbone(shape, dilated_env), dilated_env)
