"""Command-line harness: roadmap construction, batch planning, and the
benchmark commands behind the repo's reported numbers."""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import environment, roadmap as roadmap_mod, voxel
from .collision import self_collides, voxelize_backbone
from .edges import (
    DEFAULT_DELTA,
    discrete_edge_check,
    voxelize_edge_unconstrained,
)
from .environment import AnatomyEnvironment
from .kinematics import forward_kinematics, shooting_fk
from .planner import PlannerSession, SearchFailure, plan_swept_volume
from .robot import (
    Configuration,
    RobotSpec,
    evaluation_preset,
    sample_config,
    within_limits,
)
from .voxel import SparseVoxelGrid

DEFAULT_DIMS = (512, 512, 512)
DEFAULT_SPACING = (0.59, 0.59, 0.625)


def _load_spec(path: str) -> RobotSpec:
    if path == "preset":
        return evaluation_preset()
    return RobotSpec.load(path)


def _default_grid(args) -> SparseVoxelGrid:
    dims = tuple(args.dims)
    spacing = tuple(args.spacing)
    return SparseVoxelGrid(dims, spacing,
                           environment._default_origin(dims, spacing))


def _load_env(args) -> AnatomyEnvironment:
    if args.scene:
        maker = {
            "shell": environment.shell_scene,
            "wall": environment.wall_scene,
            "corridor": environment.corridor_scene,
            "plate": environment.plate_scene,
            "empty": environment.empty_scene,
        }.get(args.scene)
        if maker is None:
            raise SystemExit(f"unknown scene {args.scene!r}")
        return maker()
    if args.env_volume and args.env_meta:
        return environment.ingest(args.env_volume, args.env_meta,
                                  robot_radius=args.robot_radius)
    raise SystemExit("provide --scene or --env-volume/--env-meta")


def _add_env_args(p):
    p.add_argument("--scene", default=None,
                   help="built-in scene: shell, wall, corridor, empty")
    p.add_argument("--env-volume", default=None,
                   help="raw uint8 occupancy volume file")
    p.add_argument("--env-meta", default=None, help="volume metadata file")
    p.add_argument("--robot-radius", type=float, default=3.0)


def cmd_precompute(args) -> int:
    spec = _load_spec(args.spec)
    grid = _default_grid(args)
    t0 = time.perf_counter()
    rm = roadmap_mod.precompute(
        spec, args.n, seed=args.seed, grid=grid, workers=args.workers,
        progress=(lambda m: print(m, flush=True)) if args.verbose else None)
    elapsed = time.perf_counter() - t0
    roadmap_mod.save(rm, args.out)
    attempts = rm.meta["sample_attempts"]
    print(f"vertices: {rm.num_vertices}")
    print(f"edges: {rm.num_edges}")
    print(f"acceptance_rate: {rm.num_vertices / attempts:.4f}")
    print(f"elapsed_s: {elapsed:.2f}")
    print(f"file: {args.out} ({os.path.getsize(args.out)} bytes)")
    return 0


def _read_goals(path: str) -> list:
    goals = []
    with open(path) as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            goals.append([float(x) for x in line.split()])
    return goals


def cmd_plan_batch(args) -> int:
    spec = _load_spec(args.spec)
    env = _load_env(args)
    rm = roadmap_mod.load_pruned(args.roadmap, env.dilated, spec,
                                 check_edges=not args.no_edge_prune)
    if args.goals:
        goals = _read_goals(args.goals)
    else:
        rng = np.random.default_rng(args.seed)
        goals = [env.sample_goal(rng).tolist() for _ in range(args.n_goals)]
    sess = PlannerSession(rm, env.dilated, k_ik=args.k_ik,
                          threshold=args.threshold)
    rows = []
    failures = 0
    for g in goals:
        try:
            plan = sess.supervisory_step(g)
        except SearchFailure:
            failures += 1
            rows.append(list(g) + ["", "", "", "", "", "", "", 1])
            continue
        rows.append(list(g) + list(plan.tip) + [
            plan.tip_error, plan.timings["ik"], plan.timings["search"],
            plan.timings["total"], 0])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out)
    w.writerow(["goal_x", "goal_y", "goal_z", "tip_x", "tip_y", "tip_z",
                "tip_error_mm", "ik_time_s", "plan_time_s", "total_time_s",
                "failure"])
    w.writerows(rows)
    if args.out:
        out.close()
    done = [r for r in rows if r[-1] == 0]
    if done:
        errs = np.array([r[6] for r in done])
        tot = np.array([r[9] for r in done])
        print(f"goals: {len(goals)}  failures: {failures}", file=sys.stderr)
        print(f"tip_error_mm: mean {errs.mean():.3f}  "
              f"within_threshold {(errs < args.threshold).mean():.3f}",
              file=sys.stderr)
        print(f"step_time_s: mean {tot.mean():.3f}  max {tot.max():.3f}  "
              f"rate_hz {1.0 / tot.mean():.1f}", file=sys.stderr)
    return 0 if failures == 0 else 1


def cmd_bench_fk(args) -> int:
    spec = _load_spec(args.spec)
    rng = np.random.default_rng(args.seed)
    methods = args.methods.split(",")
    # warm JIT-compiled kernels so timings reflect steady state
    warm = Configuration((0.0,) * spec.num_tendons, 0.0, 0.0)
    forward_kinematics(spec, warm)
    if any(m.startswith("shooting") for m in methods):
        shooting_fk(spec, warm)
    configs = [sample_config(rng, spec) for _ in range(args.samples)]
    rows = []
    for i, q in enumerate(configs):
        for method in methods:
            t0 = time.perf_counter()
            if method == "ivp":
                shape = forward_kinematics(spec, q)
            elif method in ("shooting-central", "shooting-forward"):
                shape = shooting_fk(spec, q, diff_mode=method.split("-")[1])
            else:
                raise SystemExit(f"unknown method {method!r}")
            dt = time.perf_counter() - t0
            rows.append([i, method, int(shape.converged),
                         f"{shape.residual:.3e}", f"{dt:.6f}"])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out)
    w.writerow(["config", "method", "converged", "residual_si", "time_s"])
    w.writerows(rows)
    if args.out:
        out.close()
    for method in methods:
        sub = [r for r in rows if r[1] == method]
        conv = np.mean([r[2] for r in sub])
        mean_t = np.mean([float(r[4]) for r in sub])
        print(f"{method}: converged {conv:.4f}  mean_time_s {mean_t:.5f}",
              file=sys.stderr)
    return 0


def cmd_bench_collision(args) -> int:
    spec = _load_spec(args.spec)
    env = _load_env(args)
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.samples):
        q = sample_config(rng, spec)
        t0 = time.perf_counter()
        shape = forward_kinematics(spec, q)
        t1 = time.perf_counter()
        valid = shape.converged and within_limits(q, shape, spec)
        self_c = self_collides(shape, spec) if shape.converged else False
        t2 = time.perf_counter()
        env_c = False
        t3 = t2
        if shape.converged and not self_c:
            try:
                vox = voxelize_backbone(shape, env.dilated)
                env_c = voxel.collides(vox, env.dilated)
            except ValueError:
                env_c = True  # left the grid: treated as not free
            t3 = time.perf_counter()
        rows.append([i, int(valid and not self_c), int(env_c),
                     f"{t1 - t0:.6f}", f"{t2 - t1:.6f}", f"{t3 - t2:.6f}"])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out)
    w.writerow(["config", "valid", "env_collides", "fk_time_s",
                "self_collision_time_s", "voxelize_env_time_s"])
    w.writerows(rows)
    if args.out:
        out.close()
    tot = [float(r[3]) + float(r[4]) + float(r[5]) for r in rows]
    print(f"mean_pipeline_time_s {np.mean(tot):.6f}", file=sys.stderr)
    return 0


def cmd_bench_edges(args) -> int:
    spec = _load_spec(args.spec)
    grid = _default_grid(args)
    rng = np.random.default_rng(args.seed)

    def sample_valid():
        while True:
            q = sample_config(rng, spec)
            shape = forward_kinematics(spec, q)
            if (shape.converged and within_limits(q, shape, spec)
                    and not self_collides(shape, spec)):
                try:
                    voxel.voxelize_polyline(grid, shape.positions)
                except ValueError:
                    continue
                return q

    rows = []
    for i in range(args.edges):
        qa = sample_valid()
        qb = sample_valid()
        dyn = voxelize_edge_unconstrained(spec, qa, qb, grid, DEFAULT_DELTA)
        disc = discrete_edge_check(spec, qa, qb, grid, None, DEFAULT_DELTA)
        agree = dyn.reached.key() == disc.reached.key() or (
            _full(dyn, qb) == _full(disc, qb))
        rows.append([i, dyn.fk_calls, disc.fk_calls, int(_full(dyn, qb)),
                     int(agree)])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out)
    w.writerow(["edge", "dynamic_fk_calls", "discrete_fk_calls",
                "edge_valid", "verdicts_agree"])
    w.writerows(rows)
    if args.out:
        out.close()
    dyn_mean = np.mean([r[1] for r in rows])
    disc_mean = np.mean([r[2] for r in rows])
    print(f"mean_fk_calls: dynamic {dyn_mean:.1f}  discrete {disc_mean:.1f}"
          f"  ratio {disc_mean / dyn_mean:.1f}", file=sys.stderr)
    return 0


def _full(ev, qb: Configuration) -> bool:
    return ev.reached.key() == qb.key()


def cmd_stats(args) -> int:
    spec = _load_spec(args.spec)
    rm = roadmap_mod.load_raw(args.roadmap, spec)
    comps = rm.connected_components()
    print(f"file_bytes: {os.path.getsize(args.roadmap)}")
    print(f"vertices: {rm.num_vertices}")
    print(f"edges: {rm.num_edges}")
    print(f"components: {len(comps)}")
    print("component_sizes: "
          + " ".join(str(len(c)) for c in comps[:10])
          + (" ..." if len(comps) > 10 else ""))
    n_vvox = sum(1 for v in rm.vertices if v.vox is not None)
    n_evox = sum(1 for e in rm.edges if e is not None and e.vox is not None)
    print(f"vertex_vox_cached: {n_vvox}")
    print(f"edge_vox_cached: {n_evox}")
    for key in ("seed", "n_r", "k_n", "weights", "delta"):
        print(f"meta_{key}: {rm.meta.get(key)}")
    return 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="tendonplan",
        description="Tendon-driven continuum robot motion planning harness")
    sub = p.add_subparsers(dest="cmd", required=True)

    pc = sub.add_parser("precompute", help="build and save a roadmap")
    pc.add_argument("--spec", default="preset")
    pc.add_argument("--n", type=int, required=True)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", required=True)
    pc.add_argument("--workers", type=int, default=1)
    pc.add_argument("--dims", type=int, nargs=3, default=list(DEFAULT_DIMS))
    pc.add_argument("--spacing", type=float, nargs=3,
                    default=list(DEFAULT_SPACING))
    pc.add_argument("--verbose", action="store_true")
    pc.set_defaults(fn=cmd_precompute)

    pb = sub.add_parser("plan-batch", help="run supervisory steps per goal")
    pb.add_argument("--spec", default="preset")
    pb.add_argument("--roadmap", required=True)
    _add_env_args(pb)
    pb.add_argument("--goals", default=None,
                    help="text file, one 'x y z' goal per line")
    pb.add_argument("--n-goals", type=int, default=100,
                    help="random goal count when no goals file is given")
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--k-ik", type=int, default=5)
    pb.add_argument("--threshold", type=float, default=0.5)
    pb.add_argument("--no-edge-prune", action="store_true",
                    help="skip edge collision checks at load (edges lazy)")
    pb.add_argument("--out", default=None)
    pb.set_defaults(fn=cmd_plan_batch)

    bf = sub.add_parser("bench-fk", help="FK timing/convergence benchmark")
    bf.add_argument("--spec", default="preset")
    bf.add_argument("--samples", type=int, default=1000)
    bf.add_argument("--seed", type=int, default=0)
    bf.add_argument("--methods", default="ivp,shooting-central")
    bf.add_argument("--out", default=None)
    bf.set_defaults(fn=cmd_bench_fk)

    bc = sub.add_parser("bench-collision",
                        help="validity pipeline timing split")
    bc.add_argument("--spec", default="preset")
    _add_env_args(bc)
    bc.add_argument("--samples", type=int, default=1000)
    bc.add_argument("--seed", type=int, default=0)
    bc.add_argument("--out", default=None)
    bc.set_defaults(fn=cmd_bench_collision)

    be = sub.add_parser("bench-edges",
                        help="dynamic vs discrete edge checking")
    be.add_argument("--spec", default="preset")
    be.add_argument("--edges", type=int, default=200)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--dims", type=int, nargs=3, default=list(DEFAULT_DIMS))
    be.add_argument("--spacing", type=float, nargs=3,
                    default=list(DEFAULT_SPACING))
    be.add_argument("--out", default=None)
    be.set_defaults(fn=cmd_bench_edges)

    st = sub.add_parser("stats", help="print roadmap file statistics")
    st.add_argument("--spec", default="preset")
    st.add_argument("roadmap")
    st.set_defaults(fn=cmd_stats)

    args = p.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
