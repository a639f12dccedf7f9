"""Command line entry point: ``subdiv-traj --scene ... --traj ... --out DIR``.

Exit codes: 0 converged, 2 iteration cap reached, 1 any error (including a
stalled line search).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .barriers import total_objective
from .config import SolverConfig
from .geometry import build_bvh
from .scene_io import (
    RunReport,
    SceneError,
    TrajectorySpec,
    lift_waypoints,
    load_config,
    load_environment,
    load_trajectory_spec,
    read_iterations,
)
from .scenes import make_scene
from .solver import IterateState, SolverError, feasible_time, solve, traj_sub
from .splines import SubdivisionHistory
from .verify import AuditReport, gradient_audit

log = logging.getLogger("subdiv_traj")

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITERS = 0, 1, 2
BUILTIN = "builtin:"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


class _ModeAction(argparse.Action):
    """Reject ``--mode`` given twice with different values."""

    def __call__(self, parser, ns, value, option_string=None):
        prev = getattr(ns, self.dest, None)
        if prev is not None and prev != value:
            raise CliError(f"conflicting --mode values {prev!r} and {value!r}")
        setattr(ns, self.dest, value)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="subdiv-traj", description="Feasible composite-Bezier trajectory optimization.")
    p.add_argument("--scene", required=True,
                   help="OBJ/PLY/XYZ file, or builtin:NAME[:ARG] for a bundled scene")
    p.add_argument("--traj", help="trajectory spec JSON (waypoints or controls)")
    p.add_argument("--config", help="solver config JSON")
    p.add_argument("--mode", choices=("exact", "inexact"), action=_ModeAction, default=None)
    p.add_argument("--out", default="run", help="output directory (default: run)")
    p.add_argument("--check-gradients", action="store_true",
                   help="finite-difference audit of the objective before solving")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized bundled scenes")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--unit-scale", type=float, default=1.0, help="meters per scene-file unit")
    p.add_argument("--samples", type=int, default=501, help="rows in samples.csv")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    p.add_argument("--quiet", action="store_true", help="do not stream iteration rows")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _set_threads() -> None:
    raw = os.environ.get("SUBDIV_TRAJ_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"SUBDIV_TRAJ_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise CliError("SUBDIV_TRAJ_THREADS must be at least 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _builtin(spec: str, seed: int):
    name, *rest = spec[len(BUILTIN):].split(":")
    args = [int(a) if a.lstrip("-").isdigit() else a for a in rest if a]
    if name == "random":
        return make_scene(name, *args, seed=seed)
    return make_scene(name, *args)


def _initial_spec(args, scene, env, config, bvh) -> TrajectorySpec:
    if args.traj:
        spec = load_trajectory_spec(args.traj)
    elif scene is not None:
        spec = TrajectorySpec(config.degree, config.continuity, 1.0, waypoints=scene.waypoints)
    else:
        raise CliError("--traj is required for scene files")
    if spec.waypoints is not None:
        spec = lift_waypoints(spec.waypoints, None, spec.degree, spec.continuity, env, config,
                              bvh, spec.initial_T)
    return spec


def check_gradients(traj, env, bvh, config, mode) -> AuditReport:
    """FD audit of the full objective at the initial state."""
    history = SubdivisionHistory.initial(traj)
    traj = traj.with_state(traj.W, feasible_time(traj.W, traj.T, history, config, traj.n_pieces))
    history, _ = traj_sub(traj.W, history, env, bvh, config)
    shape = traj.W.shape

    def ev(x, order):
        return total_objective(x[:-1].reshape(shape), x[-1], history, env, bvh, config, mode,
                               traj.maps, order=order)

    x = np.r_[traj.W.ravel(), traj.T]
    full = ev(x, 2)
    if full.infeasible:
        raise CliError(f"objective infeasible at the initial state: {full.violation}")
    return gradient_audit(lambda y: ev(y, 0), lambda y: ev(y, 1).grad, x, full.grad, full.hess,
                          name=f"total_objective[{mode}]")


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _set_threads()
        config = load_config(args.config) if args.config else SolverConfig()
        if args.mode:
            config = config.updated(mode=args.mode)
        scene = None
        if args.scene.startswith(BUILTIN):
            scene = _builtin(args.scene, args.seed)
            env = scene.env
        else:
            env = load_environment(args.scene, args.unit_scale)
        bvh = build_bvh(env, config.cutoff)
        spec = _initial_spec(args, scene, env, config, bvh)
        traj = spec.build()
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)

        if args.check_gradients:
            report = check_gradients(traj, env, bvh, config, config.mode)
            (out / "gradient_audit.json").write_text(report.to_json())
            print(report.summary(), file=sys.stderr)
            if not report.passed:
                print("error: gradient audit failed; not solving", file=sys.stderr)
                return EXIT_ERROR

        stream = not args.quiet
        if stream:
            print("iter,objective,T,alpha,history_size", flush=True)

        def on_iterate(s: IterateState):
            if stream:
                print(f"{s.iter_index},{s.objective.value!r},{s.T!r},{s.alpha!r},{len(s.history)}",
                      flush=True)

        t0 = time.perf_counter()
        result = solve(traj, env, config, config.mode, bvh=bvh, callback=on_iterate,
                       max_iters=args.max_iters)
        wall = time.perf_counter() - t0
        report = RunReport.from_result(result, wall, args.samples)
        report.extra["config"] = {k: (v if np.isfinite(v) else "inf") if isinstance(v, float) else v
                                  for k, v in config.to_dict().items()}
        paths = report.write(out)
        if not args.no_plots:
            from .plotting import render_report

            paths.update(render_report(out, result.trajectory, report.samples,
                                       read_iterations(paths["iterations"]), env, traj,
                                       config.v_max, config.a_max))
        print(f"# status={result.status} mode={result.mode} iterations={len(result.log)} "
              f"objective={result.objective!r} T={result.trajectory.T!r} "
              f"grad_inf={result.grad_inf_norm:.3e} wall_s={wall:.3f}", flush=True)
        for key, p in paths.items():
            print(f"# {key}: {p}")
        if result.status == "converged":
            return EXIT_OK
        if result.status == "max_iters":
            return EXIT_MAX_ITERS
        print(f"error: solver {result.status}", file=sys.stderr)
        return EXIT_ERROR
    except (CliError, SceneError, SolverError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
