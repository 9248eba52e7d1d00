"""Forward kinematics: fast IVP solver built on the fixed-point base balance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..robot import Configuration, RobotSpec, node_arclengths
from . import _rod_core

MM = 1e-3

FIXED_POINT_TOL = 5e-6      # combined N / N*m residual
FIXED_POINT_MAX_ITERS = 1000
FIXED_POINT_STALL = 50      # abort after this many non-improving iterations


@dataclass(frozen=True)
class RodState:
    """Strain state at one arc length: v dimensionless, u in 1/m."""

    v: np.ndarray
    u: np.ndarray


@dataclass
class BackboneShape:
    """Discretized backbone: node positions (mm), frames, tendon path lengths."""

    positions: np.ndarray        # (M, 3) mm, base frame with rotation applied
    orientations: np.ndarray     # (M, 3, 3)
    tendon_lengths: np.ndarray   # (N,) mm
    converged: bool
    residual: float
    arclengths: np.ndarray       # (M,) mm, from retraction to length
    strain_v: np.ndarray         # (M, 3) SI
    strain_u: np.ndarray         # (M, 3) 1/m

    @property
    def num_nodes(self) -> int:
        return self.positions.shape[0]


def _si_stiffness(spec: RobotSpec):
    kse = np.ascontiguousarray(spec.stiffness_shear_ext, dtype=float)
    kbt = np.ascontiguousarray(spec.stiffness_bend_twist * 1e-6, dtype=float)
    return kse, kbt


def _si_stiffness_cached(spec: RobotSpec):
    cached = getattr(spec, "_si_stiffness", None)
    if cached is None:
        kse, kbt = _si_stiffness(spec)
        cached = (kse, kbt, np.linalg.inv(kse), np.linalg.inv(kbt))
        object.__setattr__(spec, "_si_stiffness", cached)
    return cached


def _routing_at(spec: RobotSpec, s_mm: np.ndarray):
    """Sample all routings at the given arc lengths; SI units out."""
    n = spec.num_tendons
    m = s_mm.shape[0]
    r = np.empty((m, n, 3))
    rd = np.empty((m, n, 3))
    rdd = np.empty((m, n, 3))
    for i, t in enumerate(spec.tendons):
        r[:, i, :] = t.offset(s_mm) * MM
        rd[:, i, :] = t.offset_deriv(s_mm)
        rdd[:, i, :] = t.offset_second_deriv(s_mm) / MM
    return r, rd, rdd


def solve_initial_state(spec: RobotSpec, tensions, s0_mm: float = 0.0,
                        tol: float = FIXED_POINT_TOL):
    """Fixed-point solve for the strain state at the start of integration.

    Returns (RodState, converged, residual).
    """
    taus = np.asarray(tensions, dtype=float)
    if taus.shape != (spec.num_tendons,):
        raise ValueError("tension vector length mismatch")
    kse, kbt = _si_stiffness(spec)
    r0, rd0, _ = _routing_at(spec, np.array([float(s0_mm)]))
    u0, v0, ok, res, _iters = _rod_core.fixed_point_init(
        np.ascontiguousarray(r0[0]), np.ascontiguousarray(rd0[0]), taus,
        kse, kbt, np.linalg.inv(kse), np.linalg.inv(kbt),
        tol, FIXED_POINT_MAX_ITERS, FIXED_POINT_STALL,
    )
    return RodState(v=v0, u=u0), bool(ok), float(res)


def _rotz(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def forward_kinematics(spec: RobotSpec, q: Configuration,
                       tol: float = FIXED_POINT_TOL) -> BackboneShape:
    """Integrate the rod as an IVP from the insertion point to the tip.

    Non-convergence of the base balance is reported through the shape's
    ``converged`` flag; callers treat such configurations as invalid.
    tol is the base force/moment balance residual threshold (SI).
    """
    sv_mm = node_arclengths(spec, q.retraction)
    taus = np.asarray(q.tensions, dtype=float)
    m = sv_mm.shape[0]
    routing = spec.analytic_routing()
    if m >= 2 and routing is not None:
        kse, kbt, kse_inv, kbt_inv = _si_stiffness_cached(spec)
        ps, rs, vs, us, tendon_lengths, ok, res = _rod_core.fk_fast(
            sv_mm, routing[0], routing[1], taus, kse, kbt, kse_inv, kbt_inv,
            tol, FIXED_POINT_MAX_ITERS, FIXED_POINT_STALL)
        ok = bool(ok)
        res = float(res)
        if not np.all(np.isfinite(ps)):
            ok = False
            res = float("inf")
        rot = _rotz(q.rotation)
        return BackboneShape(
            positions=(ps / MM) @ rot.T,
            orientations=np.einsum("ij,mjk->mik", rot, rs),
            tendon_lengths=tendon_lengths,
            converged=ok,
            residual=res,
            arclengths=sv_mm,
            strain_v=vs,
            strain_u=us,
        )

    kse, kbt = _si_stiffness(spec)
    state, ok, res = solve_initial_state(spec, taus, sv_mm[0], tol=tol)

    if m < 2:
        # fully retracted degenerate shape: a single node at the origin
        return BackboneShape(
            positions=np.zeros((1, 3)),
            orientations=np.eye(3)[None, :, :],
            tendon_lengths=np.zeros(spec.num_tendons),
            converged=ok,
            residual=res,
            arclengths=sv_mm.copy(),
            strain_v=state.v[None, :],
            strain_u=state.u[None, :],
        )

    # half grid: nodes interleaved with step midpoints
    s_half = np.empty(2 * m - 1)
    s_half[0::2] = sv_mm
    s_half[1::2] = 0.5 * (sv_mm[:-1] + sv_mm[1:])
    r_s, rd_s, rdd_s = _routing_at(spec, s_half)

    ps, rs, vs, us = _rod_core.integrate_rod(
        sv_mm * MM, r_s, rd_s, rdd_s, taus, kse, kbt, state.u, state.v,
    )
    if not np.all(np.isfinite(ps)):
        ok = False
        res = float("inf")

    # tendon path lengths before base rotation (rotation preserves lengths)
    tendon_lengths = np.empty(spec.num_tendons)
    nodes_r = r_s[0::2]  # (M, N, 3) in meters
    for i in range(spec.num_tendons):
        pi = np.einsum("mjk,mk->mj", rs, nodes_r[:, i, :]) + ps
        tendon_lengths[i] = np.linalg.norm(np.diff(pi, axis=0), axis=1).sum() / MM

    rot = _rotz(q.rotation)
    positions = (ps / MM) @ rot.T
    orientations = np.einsum("ij,mjk->mik", rot, rs)

    return BackboneShape(
        positions=positions,
        orientations=orientations,
        tendon_lengths=tendon_lengths,
        converged=ok,
        residual=res,
        arclengths=sv_mm.copy(),
        strain_v=vs,
        strain_u=us,
    )


def tip_position(shape: BackboneShape) -> np.ndarray:
    """Distal centerline position in mm."""
    if not shape.converged:
        raise ValueError("tip position of a non-converged shape")
    return shape.positions[-1].copy()


def tip_equilibrium_residual(spec: RobotSpec, q: Configuration,
                             shape: BackboneShape) -> np.ndarray:
    """Force/torque mismatch of the tip boundary condition, (2,) in SI.

    Independent check of the integrated solution: the constitutive internal
    loads at the tip must balance the tendon termination loads.
    """
    kse, kbt = _si_stiffness(spec)
    r_t, rd_t, _ = _routing_at(spec, np.array([spec.length]))
    res = _rod_core.tip_residual(
        np.ascontiguousarray(shape.strain_v[-1]),
        np.ascontiguousarray(shape.strain_u[-1]),
        np.ascontiguousarray(r_t[0]), np.ascontiguousarray(rd_t[0]),
        np.asarray(q.tensions, dtype=float), kse, kbt,
    )
    return np.array([np.linalg.norm(res[:3]), np.linalg.norm(res[3:])])
