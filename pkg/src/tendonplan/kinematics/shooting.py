"""Shooting-method baseline: LM over the base strain state to satisfy the
tip boundary condition.  Shares the forward integration with the IVP solver."""

from __future__ import annotations

import numpy as np

from ..robot import Configuration, RobotSpec, node_arclengths
from . import _rod_core
from .fk import (
    MM,
    BackboneShape,
    FIXED_POINT_TOL,
    _routing_at,
    _rotz,
    _si_stiffness,
)

LM_MAX_ITERS = 500
LM_FD_STEP = 1e-8
LM_LAMBDA0 = 1e-3
LM_LAMBDA_MAX = 1e8
LM_STEP_MIN = 1e-12


class _Integrator:
    """One edge-of-call bundle of precomputed routing samples."""

    def __init__(self, spec: RobotSpec, retraction: float):
        self.spec = spec
        self.sv_mm = node_arclengths(spec, retraction)
        m = self.sv_mm.shape[0]
        s_half = np.empty(2 * m - 1)
        s_half[0::2] = self.sv_mm
        s_half[1::2] = 0.5 * (self.sv_mm[:-1] + self.sv_mm[1:])
        self.r_s, self.rd_s, self.rdd_s = _routing_at(spec, s_half)
        self.kse, self.kbt = _si_stiffness(spec)
        r_t, rd_t, _ = _routing_at(spec, np.array([spec.length]))
        self.r_tip = np.ascontiguousarray(r_t[0])
        self.rd_tip = np.ascontiguousarray(rd_t[0])
        self.calls = 0

    def run(self, taus, u0, v0):
        self.calls += 1
        return _rod_core.integrate_rod(
            self.sv_mm * MM, self.r_s, self.rd_s, self.rdd_s,
            taus, self.kse, self.kbt, u0, v0,
        )

    def residual(self, taus, x):
        """Tip boundary residual (6,) for state x = (v0, u0)."""
        ps, rs, vs, us = self.run(taus, x[3:].copy(), x[:3].copy())
        if not np.all(np.isfinite(vs[-1])) or not np.all(np.isfinite(us[-1])):
            return None, None
        g = _rod_core.tip_residual(
            np.ascontiguousarray(vs[-1]), np.ascontiguousarray(us[-1]),
            self.r_tip, self.rd_tip, taus, self.kse, self.kbt,
        )
        return g, (ps, rs, vs, us)


def shooting_fk(spec: RobotSpec, q: Configuration,
                diff_mode: str = "central",
                tol: float = FIXED_POINT_TOL) -> BackboneShape:
    """Solve the rod BVP by root finding on the tip equilibrium residual.

    diff_mode selects forward or central finite differences for the LM
    Jacobian.  Returns the integrated shape at the best state found; the
    ``converged`` flag reports whether the residual met the IVP solver's
    threshold.
    """
    if diff_mode not in ("forward", "central"):
        raise ValueError("diff_mode must be 'forward' or 'central'")
    taus = np.asarray(q.tensions, dtype=float)
    integ = _Integrator(spec, q.retraction)

    x = np.concatenate([np.array([0.0, 0.0, 1.0]), np.zeros(3)])  # (v0, u0)
    g, sol = integ.residual(taus, x)
    if g is None:
        g = np.full(6, np.inf)
    cost = float(np.linalg.norm(g))
    lam = LM_LAMBDA0
    iters = 0

    while cost >= tol and iters < LM_MAX_ITERS and sol is not None:
        iters += 1
        jac = np.empty((6, 6))
        ok = True
        for k in range(6):
            e = np.zeros(6)
            e[k] = LM_FD_STEP
            gp, _ = integ.residual(taus, x + e)
            if diff_mode == "central":
                gm, _ = integ.residual(taus, x - e)
                if gp is None or gm is None:
                    ok = False
                    break
                jac[:, k] = (gp - gm) / (2.0 * LM_FD_STEP)
            else:
                if gp is None:
                    ok = False
                    break
                jac[:, k] = (gp - g) / LM_FD_STEP
        if not ok:
            break

        jtj = jac.T @ jac
        jtg = jac.T @ g
        stepped = False
        while lam <= LM_LAMBDA_MAX:
            try:
                delta = np.linalg.solve(jtj + lam * np.eye(6), -jtg)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if np.linalg.norm(delta) < LM_STEP_MIN:
                break
            g_new, sol_new = integ.residual(taus, x + delta)
            if g_new is not None and float(np.linalg.norm(g_new)) < cost:
                x = x + delta
                g = g_new
                sol = sol_new
                cost = float(np.linalg.norm(g_new))
                lam = max(lam / 10.0, 1e-12)
                stepped = True
                break
            lam *= 10.0
        if not stepped:
            break

    converged = cost < tol
    if sol is None:
        m = integ.sv_mm.shape[0]
        ps = np.zeros((m, 3))
        rs = np.tile(np.eye(3), (m, 1, 1))
        vs = np.zeros((m, 3))
        us = np.zeros((m, 3))
    else:
        ps, rs, vs, us = sol

    tendon_lengths = np.empty(spec.num_tendons)
    nodes_r = integ.r_s[0::2]
    for i in range(spec.num_tendons):
        pi = np.einsum("mjk,mk->mj", rs, nodes_r[:, i, :]) + ps
        tendon_lengths[i] = np.linalg.norm(np.diff(pi, axis=0), axis=1).sum() / MM

    rot = _rotz(q.rotation)
    shape = BackboneShape(
        positions=(ps / MM) @ rot.T,
        orientations=np.einsum("ij,mjk->mik", rot, rs),
        tendon_lengths=tendon_lengths,
        converged=converged,
        residual=cost,
        arclengths=integ.sv_mm.copy(),
        strain_v=vs,
        strain_u=us,
    )
    shape.integration_passes = integ.calls
    shape.lm_iterations = iters
    return shape
