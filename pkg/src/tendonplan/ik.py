"""Damped-least-squares inverse kinematics and the two planning-time IK
strategies: roadmap-seeded IK and restart-based IK with backstepping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collision import is_free, voxelize_backbone
from .edges import DEFAULT_DELTA, voxelize_free_edge
from .kinematics import forward_kinematics
from .robot import (
    DEFAULT_WEIGHTS,
    Configuration,
    RobotSpec,
    config_distance,
    interpolate_config,
    sample_config,
)
from .roadmap import STATUS_CHECKED, STATUS_LAZY, Roadmap, prm_star_k
from .voxel import SparseVoxelGrid


@dataclass(frozen=True)
class LmParams:
    max_iters: int
    lm_lambda: float
    # per-subspace central-difference steps (tension N, rotation rad,
    # retraction mm): a quarter of the motion-validation thresholds
    fd_step: tuple = tuple(d / 4.0 for d in DEFAULT_DELTA)


# damping/iteration profiles used in the experiments
ROADMAP_IK_PROFILE = LmParams(max_iters=20, lm_lambda=10.0)
RESTART_IK_SLOW = LmParams(max_iters=200, lm_lambda=4000.0)
RESTART_IK_FAST = LmParams(max_iters=10, lm_lambda=1000.0)


@dataclass
class IkResult:
    config: Configuration
    tip: np.ndarray
    tip_error: float
    success: bool
    connected_from: int | None = None  # seed roadmap vertex
    vertex_id: int | None = None       # vertex holding config after the call


def _clamp(arr: np.ndarray, spec: RobotSpec) -> np.ndarray:
    out = arr.copy()
    for i, (lo, hi) in enumerate(spec.tension_limits):
        out[i] = min(max(out[i], lo), hi)
    out[-1] = min(max(out[-1], 0.0), spec.length)
    return out


def _tip(spec: RobotSpec, arr: np.ndarray):
    """Tip position of the clamped configuration, or None if FK fails."""
    shape = forward_kinematics(spec, Configuration.from_array(arr))
    if not shape.converged:
        return None
    return shape.positions[-1]


def _jacobian(spec: RobotSpec, arr: np.ndarray, tip: np.ndarray,
              fd_step) -> np.ndarray:
    """3 x (N+2) tip Jacobian by central differences, one-sided at the
    box boundary (perturbations are clamped back into the box)."""
    n = arr.shape[0]
    steps = np.empty(n)
    steps[:-2] = fd_step[0]
    steps[-2] = fd_step[1]
    steps[-1] = fd_step[2]
    jac = np.zeros((3, n))
    for k in range(n):
        ap = arr.copy()
        am = arr.copy()
        ap[k] += steps[k]
        am[k] -= steps[k]
        ap = _clamp(ap, spec)
        am = _clamp(am, spec)
        denom = ap[k] - am[k]
        if denom == 0.0:
            continue
        tp = _tip(spec, ap)
        tm = _tip(spec, am)
        if tp is not None and tm is not None:
            jac[:, k] = (tp - tm) / denom
        elif tp is not None:
            jac[:, k] = (tp - tip) / (ap[k] - arr[k]) if ap[k] != arr[k] else 0.0
        elif tm is not None:
            jac[:, k] = (tip - tm) / (arr[k] - am[k]) if am[k] != arr[k] else 0.0
    return jac


def lm_ik(spec: RobotSpec, guess: Configuration, g, threshold: float,
          params: LmParams = ROADMAP_IK_PROFILE) -> Configuration:
    """Levenberg-Marquardt minimization of tip error over tensions,
    rotation, and retraction, with box clamping of every trial point.

    The result may be in collision; projecting into free space is the
    caller's job.  Raises if the kinematics fail to converge at the guess.
    """
    g = np.asarray(g, dtype=float)
    arr = _clamp(guess.as_array(), spec)
    tip = _tip(spec, arr)
    if tip is None:
        raise ValueError("kinematics did not converge at the initial guess")
    err = float(np.linalg.norm(tip - g))
    lam = params.lm_lambda
    for _ in range(params.max_iters):
        if err < threshold:
            break
        jac = _jacobian(spec, arr, tip, params.fd_step)
        jtj = jac.T @ jac
        rhs = jac.T @ (g - tip)
        accepted = False
        while lam <= 1e8:
            try:
                step = np.linalg.solve(jtj + lam * np.eye(jtj.shape[0]), rhs)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if np.linalg.norm(step) < 1e-12:
                break
            trial = _clamp(arr + step, spec)
            trial_tip = _tip(spec, trial)
            if trial_tip is None:
                lam *= 10.0  # trial rejected: kinematics failed there
                continue
            trial_err = float(np.linalg.norm(trial_tip - g))
            if trial_err < err:
                arr, tip, err = trial, trial_tip, trial_err
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break  # stagnation: damping exhausted or vanishing step
    return Configuration.from_array(arr)


def _lm_with_tip(spec, guess, g, threshold, params):
    q = lm_ik(spec, guess, g, threshold, params)
    shape = forward_kinematics(spec, q)
    tip = shape.positions[-1]
    return q, tip, float(np.linalg.norm(tip - np.asarray(g, dtype=float)))


def roadmap_ik(rm: Roadmap, k_ik: int, g, threshold: float,
               env: SparseVoxelGrid,
               params: LmParams = ROADMAP_IK_PROFILE) -> IkResult:
    """IK seeded from the k_ik tip-space nearest roadmap vertices.

    Each seed is optimized with LM, then the straight configuration-space
    edge from the seed toward the solution is swept, keeping only the
    portion that stays free.  The first reached configuration still within
    the threshold wins; otherwise every deferred edge is evaluated and the
    closest reached configuration is taken.  The winner joins the roadmap
    via its checked-free edge plus lazy k-nearest edges, so the graph stays
    one connected component.  Deterministic for a fixed roadmap and goal.
    """
    if rm.num_vertices == 0:
        raise ValueError("roadmap is empty")
    g = np.asarray(g, dtype=float)
    spec = rm.spec
    seeds = rm.k_nearest_tips(g, k_ik)

    reached_list = []  # (seed vid, reached config, swept, tip, err)
    deferred = []      # (seed vid, lm config)
    found = None
    for vid in seeds:
        vid = int(vid)
        q_nn = rm.vertices[vid].config
        q_ik, _, lm_err = _lm_with_tip(spec, q_nn, g, threshold, params)
        if lm_err < threshold:
            ev = voxelize_free_edge(spec, q_nn, q_ik, env)
            shape = forward_kinematics(spec, ev.reached)
            tip = shape.positions[-1]
            err = float(np.linalg.norm(tip - g))
            entry = (vid, ev.reached, ev.swept, tip, err)
            if err < threshold:
                found = entry
                break
            reached_list.append(entry)
        else:
            deferred.append((vid, q_ik))

    if found is None:
        for vid, q_ik in deferred:
            ev = voxelize_free_edge(spec, rm.vertices[vid].config, q_ik, env)
            shape = forward_kinematics(spec, ev.reached)
            tip = shape.positions[-1]
            err = float(np.linalg.norm(tip - g))
            reached_list.append((vid, ev.reached, ev.swept, tip, err))
        found = min(reached_list, key=lambda e: e[4])

    vid, reached, swept, tip, err = found
    if reached.key() == rm.vertices[vid].config.key():
        # degenerate zero-length edge: the seed itself is the best
        # reachable point, so no new vertex is needed
        return IkResult(reached, tip, err, err < threshold,
                        connected_from=vid, vertex_id=vid)

    shape = forward_kinematics(spec, reached)
    new_vid = rm.add_vertex(reached, tip, voxelize_backbone(shape, rm.grid))
    rm.add_edge(vid, new_vid, swept, STATUS_CHECKED)
    k_n = prm_star_k(rm.num_vertices, spec.config_dim)
    linked = {other for _, other in rm.neighbors(new_vid)}
    for nb in rm.k_nearest_configs(reached, k_n, exclude=new_vid):
        nb = int(nb)
        if nb != new_vid and nb not in linked:
            rm.add_edge(new_vid, nb, None, STATUS_LAZY)
            linked.add(nb)
    return IkResult(reached, tip, err, err < threshold,
                    connected_from=vid, vertex_id=new_vid)


def _backstep_to_free(spec, q_ik, guess, env, step,
                      weights=DEFAULT_WEIGHTS) -> Configuration:
    """Walk from the LM solution back toward its (free) guess in fixed
    configuration-space increments until free space is reached."""
    if is_free(spec, q_ik, env):
        return q_ik
    dist = config_distance(q_ik, guess, weights)
    if dist <= 0.0:
        return guess
    u = 0.0
    while True:
        u += step / dist
        if u >= 1.0:
            return guess
        q = interpolate_config(q_ik, guess, u)
        if is_free(spec, q, env):
            return q


def normal_ik(spec: RobotSpec, g, q_current: Configuration, k_restarts: int,
              threshold: float, env: SparseVoxelGrid,
              rng: np.random.Generator,
              params: LmParams = RESTART_IK_FAST,
              backstep: float | None = None,
              weights=DEFAULT_WEIGHTS) -> Configuration:
    """Restart-based IK: LM from the current configuration, backstepping
    any in-collision solution toward its free guess, with up to k_restarts
    additional attempts from random free samples.  Always returns a free
    configuration (the guess itself in the worst case)."""
    if backstep is None:
        # one motion-validation threshold, measured in the config metric
        w_t, w_rot, w_ret = weights
        backstep = math.sqrt((w_t * DEFAULT_DELTA[0]) ** 2
                             + (w_rot * DEFAULT_DELTA[1]) ** 2
                             + (w_ret * DEFAULT_DELTA[2]) ** 2)
    g = np.asarray(g, dtype=float)
    guess = q_current
    collected = []  # (err, order, config)
    for attempt in range(k_restarts + 1):
        q_ik = lm_ik(spec, guess, g, threshold, params)
        q_ik = _backstep_to_free(spec, q_ik, guess, env, backstep, weights)
        tip = forward_kinematics(spec, q_ik).positions[-1]
        err = float(np.linalg.norm(tip - g))
        if err < threshold:
            return q_ik
        collected.append((err, attempt, q_ik))
        while True:
            guess = sample_config(rng, spec)
            if is_free(spec, guess, env):
                break
    return min(collected)[2]
