"""Primal interior-point solvers with adaptive subdivision.

Both solvers keep every iterate strictly feasible: a step is accepted only
if, for every history entry, the hull of its control points before and
after the step clears the environment.  The exact solver sums barrier terms
over all hull primitives; the inexact one uses one chord per entry and
compensates with a tightened safeguard and on-demand subdivision.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .barriers import BarrierEvaluation, dynamics_rows, time_barrier, total_objective
from .config import SolverConfig
from .geometry import Bvh, Environment, build_bvh
from .splines import (
    CompositeTrajectory,
    SubdivisionHistory,
    hull_diameter,
    hull_edges,
    hull_triangles,
)

log = logging.getLogger(__name__)

__all__ = [
    "HullMesh",
    "InfeasibleStartError",
    "IterateState",
    "IterationRecord",
    "LineSearchStalled",
    "SolverConfig",
    "SolverError",
    "SolverResult",
    "inexact_p_ipm",
    "feasible_time",
    "need_sub",
    "p_ipm",
    "search_exact",
    "search_inexact",
    "solve",
    "spd_project",
    "subdivide_unsafe",
    "traj_sub",
]

ALPHA_MIN = 1e-14
MAX_DEPTH = 60
MAX_T_DOUBLINGS = 60


class SolverError(RuntimeError):
    pass


class InfeasibleStartError(SolverError):
    pass


class LineSearchStalled(SolverError):
    pass


# --------------------------------------------------------------------------
# state and records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IterateState:
    W: np.ndarray
    T: float
    history: SubdivisionHistory
    objective: BarrierEvaluation
    iter_index: int = 0
    alpha: float = 0.0
    dyn_history: SubdivisionHistory | None = None

    @property
    def x(self) -> np.ndarray:
        return np.r_[self.W.ravel(), self.T]


@dataclass(frozen=True)
class IterationRecord:
    """One row of the iteration log.

    ``objective_before`` is the objective at the start of the step under
    the same subdivision history, so ``objective < objective_before`` for
    every accepted step.  The terminal row has ``alpha == 0``.
    """

    iter: int
    objective: float
    grad_inf_norm: float
    alpha: float
    active_pairs: int
    history_size: int
    wall_ms: float
    objective_before: float

    FIELDS = ("iter", "objective", "grad_inf_norm", "alpha", "active_pairs",
              "history_size", "wall_ms", "objective_before")

    def as_row(self) -> tuple:
        return tuple(getattr(self, f) for f in self.FIELDS)


@dataclass
class SolverResult:
    trajectory: CompositeTrajectory
    history: SubdivisionHistory
    dyn_history: SubdivisionHistory
    log: list[IterationRecord]
    status: str                      # converged | max_iters | stalled
    grad_inf_norm: float
    objective: float
    mode: str
    eps_alpha: float = math.nan
    config: SolverConfig | None = None
    bvh: Bvh | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass(frozen=True)
class HullMesh:
    """Union of the hull primitive sets of all leaf pieces."""

    points: np.ndarray      # (E*(M+1), 3)
    edges: np.ndarray       # (E*(M+1)M/2, 2) indices into points
    triangles: np.ndarray   # (E*(M+1)M(M-1)/6, 3)


def hull_mesh(W, history: SubdivisionHistory) -> HullMesh:
    ctrl = history.controls(np.asarray(W, dtype=float))
    E, n, _ = ctrl.shape
    M = n - 1
    off = (np.arange(E) * n)[:, None, None]
    edges = (hull_edges(M)[None] + off).reshape(-1, 2)
    tris = (hull_triangles(M)[None] + off).reshape(-1, 3) if M >= 2 else np.zeros((0, 3), np.int64)
    return HullMesh(ctrl.reshape(-1, 3), edges, tris)


# --------------------------------------------------------------------------
# subdivision
# --------------------------------------------------------------------------

def need_sub(w, env: Environment, bvh: Bvh, config: SolverConfig) -> bool:
    """Hull near the environment and wider than the diameter threshold."""
    w = np.asarray(w, dtype=float)
    if hull_diameter(w) <= config.epsilon:
        return False
    d, _ = bvh.nearest(w, upper=config.cutoff, stop_below=config.cutoff)
    return bool(d < config.cutoff)


def _entry_diameters(ctrl: np.ndarray) -> np.ndarray:
    diff = ctrl[:, :, None, :] - ctrl[:, None, :, :]
    return np.sqrt(np.max(np.sum(diff * diff, axis=-1), axis=(1, 2)))


def traj_sub(W, history: SubdivisionHistory, env: Environment, bvh: Bvh,
             config: SolverConfig) -> tuple[SubdivisionHistory, HullMesh]:
    """Split entries while their hull is near the environment and wide.

    Returns the refined history and the union of the leaf hull primitives.
    """
    W = np.asarray(W, dtype=float)
    for _ in range(MAX_DEPTH):
        ctrl = history.controls(W)
        wide = _entry_diameters(ctrl) > config.epsilon
        split = np.zeros(len(history), dtype=bool)
        idx = np.flatnonzero(wide)
        if idx.size:
            d, _ = bvh.nearest_batch(ctrl[idx], config.cutoff, config.cutoff)
            split[idx[d < config.cutoff]] = True
        if not split.any():
            break
        history = history.split(np.flatnonzero(split))
    return history, hull_mesh(W, history)


def dyn_sub(W, T: float, dyn_history: SubdivisionHistory, config: SolverConfig,
            n_pieces: int) -> SubdivisionHistory:
    """Optional refinement of the velocity/acceleration hulls.

    An entry splits while some derivative control is within ``x0`` of its
    limit and the derivative hull (physical units) is wider than the
    threshold.  Disabled when both thresholds are infinite.
    """
    if math.isinf(config.epsilon_vel) and math.isinf(config.epsilon_acc):
        return dyn_history
    W = np.asarray(W, dtype=float)
    tau = T / n_pieces
    for _ in range(MAX_DEPTH):
        M = dyn_history[0].A.shape[0] - 1
        B1, B2 = dynamics_rows(dyn_history, M)
        E = len(dyn_history)
        V = (B1 @ W).reshape(E, M, 3) / tau
        A = (B2 @ W).reshape(E, M - 1, 3) / tau**2
        split = np.zeros(E, dtype=bool)
        for P, lim, eps in ((V, config.v_max, config.epsilon_vel), (A, config.a_max, config.epsilon_acc)):
            if math.isinf(eps):
                continue
            near = np.linalg.norm(P, axis=2).max(axis=1) > lim - config.x0
            split |= near & (_entry_diameters(P) > eps)
        if not split.any():
            break
        dyn_history = dyn_history.split(np.flatnonzero(split))
    return dyn_history


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------

def spd_project(H, floor: float) -> np.ndarray:
    """Clamp the eigenvalues of symmetric ``H`` from below at ``floor``."""
    H = np.asarray(H, dtype=float)
    lam, V = np.linalg.eigh(0.5 * (H + H.T))
    lam = np.maximum(lam, floor)
    out = (V * lam) @ V.T
    return 0.5 * (out + out.T)


def _newton_direction(g: np.ndarray, H: np.ndarray, free: np.ndarray, rel_floor: float):
    Hf = H[np.ix_(free, free)]
    gf = g[free]
    floor = rel_floor * max(1.0, float(np.abs(Hf).sum(axis=1).max()))
    lam, V = np.linalg.eigh(0.5 * (Hf + Hf.T))
    lam = np.maximum(lam, floor)
    d = np.zeros_like(g)
    d[free] = -(V @ ((V.T @ gf) / lam))
    return d


# --------------------------------------------------------------------------
# problem context
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Context:
    env: Environment
    bvh: Bvh
    config: SolverConfig
    maps: np.ndarray
    mode: str
    free: np.ndarray        # boolean mask over the flat (W, T) vector

    @property
    def n_pieces(self) -> int:
        return self.maps.shape[0]

    def evaluate(self, W, T, history, dyn_history, order: int = 2) -> BarrierEvaluation:
        return total_objective(W, T, history, self.env, self.bvh, self.config, self.mode,
                               self.maps, dyn_history, order)

    def split(self, x: np.ndarray):
        return x[:-1].reshape(-1, 3), float(x[-1])


def _free_mask(traj: CompositeTrajectory) -> np.ndarray:
    mask = np.ones(traj.n_free * 3 + 1, dtype=bool)
    for r in traj.fixed_rows():
        mask[3 * r:3 * r + 3] = False
    return mask


def _swept_distances(ctrl0: np.ndarray, ctrl1: np.ndarray, bvh: Bvh, clearance: np.ndarray):
    P = np.ascontiguousarray(np.concatenate([ctrl0, ctrl1], axis=1))
    d, pid = bvh.nearest_batch(P, clearance + 1e-9, clearance)
    return d, pid


def _swept_safe(state: IterateState, W1: np.ndarray, ctx: _Context, margin: np.ndarray | float = 0.0):
    c0 = state.history.controls(state.W)
    c1 = state.history.controls(W1)
    clearance = np.broadcast_to(ctx.config.d0 + np.asarray(margin, dtype=float), (c0.shape[0],)).copy()
    d, _ = _swept_distances(c0, c1, ctx.bvh, clearance)
    return d > clearance


# --------------------------------------------------------------------------
# line searches
# --------------------------------------------------------------------------

def search_exact(state: IterateState, d: np.ndarray, ctx: _Context) -> IterateState:
    """Backtracking search with swept-hull safety then the Wolfe first condition."""
    g = state.objective.grad
    slope = float(g @ d)
    if not slope < 0:
        raise ValueError("search direction is not a descent direction")
    f0 = state.objective.value
    x0 = state.x
    c1, gamma = ctx.config.c1, ctx.config.gamma
    alpha = 1.0
    while alpha >= ALPHA_MIN:
        W1, T1 = ctx.split(x0 + alpha * d)
        if T1 > 0 and np.all(_swept_safe(state, W1, ctx)):
            ev = ctx.evaluate(W1, T1, state.history, state.dyn_history, order=0)
            if not ev.infeasible and ev.value <= f0 + c1 * alpha * slope:
                return IterateState(W1, T1, state.history, ev, state.iter_index + 1, alpha,
                                    state.dyn_history)
        alpha *= gamma
    raise LineSearchStalled(f"no acceptable step above {ALPHA_MIN:g}")


def subdivide_unsafe(history: SubdivisionHistory, W, W_prime, env: Environment, bvh: Bvh,
                     config: SolverConfig) -> SubdivisionHistory:
    """Midpoint-split every entry whose swept hull fails the tightened clearance."""
    W = np.asarray(W, dtype=float)
    Wp = np.asarray(W_prime, dtype=float)
    widths = history.widths()
    clearance = config.d0 + config.epsilon_s * widths**config.eta
    d, _ = _swept_distances(history.controls(W), history.controls(Wp), bvh, clearance)
    bad = np.flatnonzero(~(d > clearance))
    if bad.size == 0:
        return history
    return history.split(bad)


def search_inexact(state: IterateState, d: np.ndarray, ctx: _Context,
                   eps_alpha: float) -> tuple[IterateState, float]:
    """Backtracking with the width-dependent safeguard and on-demand subdivision.

    When the safeguard fails below ``eps_alpha`` the unsafe entries are
    split and ``eps_alpha`` shrinks by ``gamma``.  The objective and slope
    are re-evaluated under the refined history; if ``d`` stops being a
    descent direction the current point is returned with ``alpha = 0`` so
    the outer loop can recompute the direction.
    """
    cfg = ctx.config
    f0 = state.objective.value
    slope = float(state.objective.grad @ d)
    if not slope < 0:
        raise ValueError("search direction is not a descent direction")
    x0 = state.x
    alpha = 1.0
    while alpha >= ALPHA_MIN:
        W1, T1 = ctx.split(x0 + alpha * d)
        margin = cfg.epsilon_s * state.history.widths() ** cfg.eta
        safe = bool(np.all(_swept_safe(state, W1, ctx, margin)))
        if safe and T1 > 0:
            ev = ctx.evaluate(W1, T1, state.history, state.dyn_history, order=0)
            if not ev.infeasible and ev.value <= f0 + cfg.c1 * alpha * slope:
                return IterateState(W1, T1, state.history, ev, state.iter_index + 1, alpha,
                                    state.dyn_history), eps_alpha
        if not safe and alpha < eps_alpha:
            hist = subdivide_unsafe(state.history, state.W, W1, ctx.env, ctx.bvh, cfg)
            eps_alpha *= cfg.gamma
            ev0 = ctx.evaluate(state.W, state.T, hist, state.dyn_history, order=1)
            state = replace(state, history=hist, objective=ev0)
            f0 = ev0.value
            slope = float(ev0.grad @ d)
            if not slope < 0:
                return replace(state, alpha=0.0), eps_alpha
            continue
        alpha *= cfg.gamma
    raise LineSearchStalled(f"no acceptable step above {ALPHA_MIN:g}")


# --------------------------------------------------------------------------
# outer loops
# --------------------------------------------------------------------------

def feasible_time(W, T: float, dyn_history, config, N: int) -> float:
    """Double ``T`` until the dynamics barrier is finite."""
    for _ in range(MAX_T_DOUBLINGS + 1):
        if not time_barrier(W, T, dyn_history, config, N, order=0).infeasible:
            return T
        T *= 2.0
    raise InfeasibleStartError("dynamics limits unreachable after 60 doublings of T")


def _check_start(W, history, ctx: _Context) -> None:
    ctrl = history.controls(W)
    E = ctrl.shape[0]
    d, pid = ctx.bvh.nearest_batch(ctrl, np.full(E, ctx.config.d0 + 1e-9),
                                   np.full(E, ctx.config.d0))
    bad = np.flatnonzero(~(d > ctx.config.d0))
    if bad.size:
        e = history[int(bad[0])]
        raise InfeasibleStartError(
            f"initial trajectory infeasible: piece {e.piece} interval [{e.lo:.6g}, {e.hi:.6g}] "
            f"hull within d0 of {ctx.env.describe_primitive(int(pid[bad[0]]))} "
            f"(distance {d[bad[0]]:.6g})")


def _run(traj: CompositeTrajectory, env: Environment, config: SolverConfig, mode: str,
         bvh: Bvh | None, callback: Callable[[IterateState], None] | None,
         max_iters: int | None, history: SubdivisionHistory | None = None,
         dyn_history: SubdivisionHistory | None = None) -> SolverResult:
    if traj.W.shape[1] != 3:
        raise ValueError("trajectories must live in 3-space")
    if bvh is None:
        bvh = build_bvh(env, config.cutoff)
    ctx = _Context(env, bvh, config, traj.maps, mode, _free_mask(traj))
    max_iters = config.max_outer_iters if max_iters is None else int(max_iters)
    N = traj.n_pieces
    W = np.array(traj.W, dtype=float)
    history = SubdivisionHistory.initial(traj) if history is None else history
    dyn_history = SubdivisionHistory.initial(traj) if dyn_history is None else dyn_history
    T = feasible_time(W, traj.T, dyn_history, config, N)
    history, _ = traj_sub(W, history, env, bvh, config)
    _check_start(W, history, ctx)

    eps_alpha = config.epsilon_alpha
    records: list[IterationRecord] = []
    status = "max_iters"
    gnorm = math.inf
    ev = None
    state = None
    for it in range(max_iters + 1):
        t0 = time.perf_counter()
        history, _ = traj_sub(W, history, env, bvh, config)
        dyn_history = dyn_sub(W, T, dyn_history, config, N)
        ev = ctx.evaluate(W, T, history, dyn_history, order=2)
        if ev.infeasible:
            raise SolverError(f"iterate became infeasible: {ev.violation}")
        gnorm = float(np.abs(ev.grad[ctx.free]).max()) if ctx.free.any() else 0.0
        state = IterateState(W, T, history, ev, it, 0.0, dyn_history)
        if gnorm <= config.epsilon_g:
            status = "converged"
            records.append(IterationRecord(it, ev.value, gnorm, 0.0, ev.active_pair_count,
                                           len(history), 1e3 * (time.perf_counter() - t0), ev.value))
            break
        if it == max_iters:
            break
        d = _newton_direction(ev.grad, ev.hess, ctx.free, config.spd_floor)
        try:
            if mode == "exact":
                new = search_exact(state, d, ctx)
                before = ev.value
            else:
                new, eps_alpha = search_inexact(state, d, ctx, eps_alpha)
                before = ctx.evaluate(W, T, new.history, dyn_history, order=0).value \
                    if new.history is not history else ev.value
        except LineSearchStalled:
            log.warning("line search stalled at iteration %d", it)
            status = "stalled"
            break
        W, T, history = new.W, new.T, new.history
        records.append(IterationRecord(it, new.objective.value, gnorm, new.alpha,
                                       ev.active_pair_count, len(history),
                                       1e3 * (time.perf_counter() - t0), before))
        if callback is not None:
            callback(new)
    out = traj.with_state(W, T)
    return SolverResult(out, history, dyn_history, records, status, gnorm,
                        float(ev.value) if ev is not None else math.nan, mode,
                        eps_alpha if mode == "inexact" else math.nan, config, bvh)


def _with_continuation(traj, env, config, mode, bvh, callback, max_iters) -> SolverResult:
    res = _run(traj, env, config, mode, bvh, callback, max_iters)
    cfg = config
    for _ in range(config.continuation_rounds if config.continuation else 0):
        if not res.converged:
            break
        cfg = cfg.updated(lam=cfg.lam * cfg.beta, x0=cfg.x0 * cfg.beta)
        prev_log = res.log
        res = _run(res.trajectory, env, cfg, mode, build_bvh(env, cfg.cutoff), callback,
                   max_iters, None, res.dyn_history)
        res.log = prev_log + res.log
    return res


def p_ipm(traj: CompositeTrajectory, env: Environment, config: SolverConfig | None = None,
          bvh: Bvh | None = None, callback: Callable[[IterateState], None] | None = None,
          max_iters: int | None = None) -> SolverResult:
    """Exact solver: hull-primitive barrier, swept-hull safeguard.

    ``traj`` carries the initial ``W0``, ``T0`` and the extraction maps.  The
    start and goal control points stay fixed.  ``callback`` receives every
    accepted iterate.
    """
    config = config or SolverConfig()
    return _with_continuation(traj, env, config, "exact", bvh, callback, max_iters)


def inexact_p_ipm(traj: CompositeTrajectory, env: Environment, config: SolverConfig | None = None,
                  bvh: Bvh | None = None, callback: Callable[[IterateState], None] | None = None,
                  max_iters: int | None = None) -> SolverResult:
    """Inexact solver: chord barrier, tightened safeguard, subdivision on failure."""
    config = config or SolverConfig()
    return _with_continuation(traj, env, config, "inexact", bvh, callback, max_iters)


def solve(traj: CompositeTrajectory, env: Environment, config: SolverConfig | None = None,
          mode: str | None = None, **kw) -> SolverResult:
    config = config or SolverConfig()
    mode = mode or config.mode
    if mode == "exact":
        return p_ipm(traj, env, config, **kw)
    if mode == "inexact":
        return inexact_p_ipm(traj, env, config, **kw)
    raise ValueError(f"unknown mode {mode!r}")
