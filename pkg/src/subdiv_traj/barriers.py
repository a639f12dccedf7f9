"""Barrier and energy terms over the joint variable ``(W, T)``.

The flattened variable is ``x = [W.ravel(), T]`` with ``W`` of shape
``(nfree, 3)`` in row-major order, so coordinate ``c`` of row ``j`` sits at
``3 j + c`` and ``T`` is last.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import NamedTuple

import numpy as np

from .config import SolverConfig
from .geometry import Bvh, Environment
from .geometry import _kernels as K
from .splines import (
    HistoryEntry,
    SubdivisionHistory,
    derivative_matrix,
    hull_edges,
    hull_triangles,
)

__all__ = [
    "BarrierEvaluation",
    "ClogParams",
    "ClogValue",
    "ObjectiveWeights",
    "clog",
    "collision_barrier_exact",
    "collision_barrier_inexact",
    "jerk_energy",
    "jerk_gram",
    "time_barrier",
    "total_objective",
]


# --------------------------------------------------------------------------
# clamped log
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ClogParams:
    x0: float = 0.1

    def __post_init__(self):
        if not self.x0 > 0:
            raise ValueError("activation range x0 must be positive")


class ClogValue(NamedTuple):
    value: float
    d1: float
    d2: float
    infeasible: bool = False


def clog(x: float, params: ClogParams = ClogParams()) -> ClogValue:
    """Clamped barrier ``-((x - x0)^2 / x) log(x / x0)`` and two derivatives.

    Zero for ``x >= x0``.  Non-positive ``x`` returns the infeasible flag
    with an infinite value.
    """
    x = float(x)
    if not x > 0:
        return ClogValue(math.inf, math.nan, math.nan, True)
    f, f1, f2 = K.clog_jet(x, params.x0)
    return ClogValue(f, f1, f2, False)


def _clog_vec(x: np.ndarray, x0: float):
    """Vectorized clamped barrier for ``x > 0``."""
    f = np.zeros_like(x)
    f1 = np.zeros_like(x)
    f2 = np.zeros_like(x)
    m = x < x0
    if np.any(m):
        xm = x[m]
        L = np.log(xm / x0)
        g = (xm - x0) ** 2
        g1 = 2.0 * (xm - x0)
        h = L / xm
        h1 = (1.0 - L) / xm**2
        h2 = (2.0 * L - 3.0) / xm**3
        f[m] = -g * h
        f1[m] = -(g1 * h + g * h1)
        f2[m] = -(2.0 * h + 2.0 * g1 * h1 + g * h2)
    return f, f1, f2


# --------------------------------------------------------------------------
# evaluation record
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierEvaluation:
    """Value, gradient and Hessian over ``x = [W.ravel(), T]``.

    An infeasible evaluation has ``infeasible=True``, ``value=inf`` and no
    derivatives; ``violation`` names the offending pair or limit.
    """

    value: float
    grad: np.ndarray | None
    hess: np.ndarray | None
    active_pair_count: int = 0
    infeasible: bool = False
    violation: str | None = None

    @classmethod
    def infeasible_at(cls, why: str) -> "BarrierEvaluation":
        return cls(math.inf, None, None, 0, True, why)

    @classmethod
    def zero(cls, n: int, order: int = 2) -> "BarrierEvaluation":
        return cls(0.0, np.zeros(n) if order >= 1 else None,
                   np.zeros((n, n)) if order >= 2 else None)

    @property
    def grad_W(self) -> np.ndarray:
        return self.grad[:-1].reshape(-1, 3)

    @property
    def grad_T(self) -> float:
        return float(self.grad[-1])

    def scaled(self, c: float) -> "BarrierEvaluation":
        if self.infeasible:
            return self
        return BarrierEvaluation(c * self.value,
                                 None if self.grad is None else c * self.grad,
                                 None if self.hess is None else c * self.hess,
                                 self.active_pair_count)

    def __add__(self, other: "BarrierEvaluation") -> "BarrierEvaluation":
        if self.infeasible:
            return self
        if other.infeasible:
            return other
        g = None if self.grad is None or other.grad is None else self.grad + other.grad
        h = None if self.hess is None or other.hess is None else self.hess + other.hess
        return BarrierEvaluation(self.value + other.value, g, h,
                                 self.active_pair_count + other.active_pair_count)


@dataclass(frozen=True)
class ObjectiveWeights:
    lam: float = 10.0
    time_weight: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.time_weight < 0:
            raise ValueError("time weight must be non-negative")


# --------------------------------------------------------------------------
# chain rule through the history maps
# --------------------------------------------------------------------------

def _pullback(maps: np.ndarray, g_e: np.ndarray, h_e: np.ndarray | None, nfree: int):
    """Pull per-entry control-point derivatives back to ``W``.

    ``maps`` is ``(E, n, nfree)``, ``g_e`` is ``(E, n, 3)``, ``h_e`` is
    ``(E, 3n, 3n)``.  Returns the flat gradient and Hessian over ``W``.
    """
    g = np.einsum("eaf,eac->fc", maps, g_e).ravel()
    if h_e is None:
        return g, None
    E, n = maps.shape[0], maps.shape[1]
    live = np.flatnonzero(np.any(h_e.reshape(E, -1) != 0.0, axis=1))
    H = np.zeros((nfree, 3, nfree, 3))
    if live.size:
        A = maps[live]
        cols = np.flatnonzero(np.any(A != 0.0, axis=(0, 1)))
        A = A[:, :, cols]
        h = h_e[live].reshape(live.size, n, 3, n, 3)
        tmp = np.einsum("eaf,eacbd->efcbd", A, h, optimize=True)
        blk = np.einsum("efcbd,ebg->fcgd", tmp, A, optimize=True)
        H[np.ix_(cols, range(3), cols, range(3))] = blk
    H = H.reshape(3 * nfree, 3 * nfree)
    return g, 0.5 * (H + H.T)


def _embed(gW: np.ndarray, HW: np.ndarray | None, gT: float = 0.0,
           hWT: np.ndarray | None = None, hTT: float = 0.0):
    n = gW.size + 1
    g = np.empty(n)
    g[:-1] = gW
    g[-1] = gT
    if HW is None:
        return g, None
    H = np.zeros((n, n))
    H[:-1, :-1] = HW
    if hWT is not None:
        H[:-1, -1] = hWT
        H[-1, :-1] = hWT
    H[-1, -1] = hTT
    return g, H


# --------------------------------------------------------------------------
# collision barriers
# --------------------------------------------------------------------------

def _candidates(ctrl: np.ndarray, bvh: Bvh, reach: float):
    lo = ctrl.min(axis=1)
    hi = ctrl.max(axis=1)
    return bvh.query(lo, hi, radius=reach)


def _collision(W, history: SubdivisionHistory, env: Environment, bvh: Bvh,
               config: SolverConfig, mode: int, order: int) -> BarrierEvaluation:
    W = np.asarray(W, dtype=float)
    nfree = W.shape[0]
    maps = history.stacked_maps()
    ctrl = np.ascontiguousarray(np.einsum("eaf,fc->eac", maps, W))
    M = ctrl.shape[1] - 1
    weights = history.widths() if mode == 1 else np.ones(len(history))
    ptr, idx = _candidates(ctrl, bvh, config.cutoff)
    kind, ref, cover, *_ = env.primitive_table
    htris = hull_triangles(M) if M >= 2 else np.zeros((0, 3), np.int64)
    value, g_e, h_e, active, bad_e, bad_p = K.assemble_collision(
        ctrl, np.ascontiguousarray(weights, dtype=float), mode, ptr, idx,
        kind, ref, cover, env.points, env.segments, env.triangles,
        hull_edges(M), htris, float(config.d0), float(config.x0),
        float(config.mollifier_ratio), int(order))
    if bad_e >= 0:
        e = history[bad_e]
        return BarrierEvaluation.infeasible_at(
            f"piece {e.piece} interval [{e.lo:.6g}, {e.hi:.6g}] within d0 of "
            f"{env.describe_primitive(bad_p)}")
    if order == 0:
        return BarrierEvaluation(float(value), None, None, int(active))
    gW, HW = _pullback(maps, g_e, h_e if order >= 2 else None, nfree)
    g, H = _embed(gW, HW)
    return BarrierEvaluation(float(value), g, H, int(active))


def collision_barrier_exact(W, T, history: SubdivisionHistory, env: Environment, bvh: Bvh,
                            config: SolverConfig, order: int = 2) -> BarrierEvaluation:
    """Hull-primitive barrier summed over history entries.

    Pairs: environment segments with hull edges, environment points with
    hull triangles, environment triangles with hull vertices.  ``T`` does
    not enter; its derivative entries are zero.
    """
    return _collision(W, history, env, bvh, config, 0, order)


def collision_barrier_inexact(W, T, history: SubdivisionHistory, env: Environment, bvh: Bvh,
                              config: SolverConfig, order: int = 2) -> BarrierEvaluation:
    """Chord barrier: per entry, width times the barrier of its end-to-end chord.

    The chord joins the first and last control point of the entry.  It is
    paired with every covering environment primitive (mesh triangles, cloud
    points and stray edges/points).
    """
    return _collision(W, history, env, bvh, config, 1, order)


# --------------------------------------------------------------------------
# dynamics barrier
# --------------------------------------------------------------------------

def _norm_limit_terms(B: np.ndarray, W: np.ndarray, tau: float, limit: float,
                      power: int, x0: float, N: int, order: int):
    """Sum of clog(limit - |B_r W| tau^-power) over rows ``r`` of ``B``.

    Returns ``(value, gW, HW, gT, hWT, hTT, active)`` or ``None`` when a
    row violates the limit.
    """
    P = B @ W
    r = np.linalg.norm(P, axis=1)
    tp = tau**-power
    x = limit - r * tp
    if np.any(x <= 0):
        return None
    f, f1, f2 = _clog_vec(x, x0)
    act = np.flatnonzero((f != 0) | (f1 != 0) | (f2 != 0))
    nfree = W.shape[0]
    out_g = np.zeros(3 * nfree)
    out_H = np.zeros((3 * nfree, 3 * nfree)) if order >= 2 else None
    out_hWT = np.zeros(3 * nfree)
    if act.size == 0:
        return 0.0, out_g, out_H, 0.0, out_hWT, 0.0, 0
    P, r, f, f1, f2, B = P[act], r[act], f[act], f1[act], f2[act], B[act]
    safe_r = np.where(r > 0, r, 1.0)
    u = np.where(r[:, None] > 0, P / safe_r[:, None], 0.0)
    dxdp = -u * tp
    dxdt = power * r * tau ** (-power - 1)
    d2xdt2 = -power * (power + 1) * r * tau ** (-power - 2)
    d2xdpdt = power * u * tau ** (-power - 1)
    # d/dT = (1/N) d/dtau
    gT = float(np.sum(f1 * dxdt)) / N
    gW = np.einsum("r,rj,rc->jc", f1, B, dxdp).ravel()
    if order < 2:
        return float(np.sum(f)), gW, None, gT, out_hWT, 0.0, act.size
    eye = np.eye(3)
    d2xdp2 = -(eye[None] - u[:, :, None] * u[:, None, :]) * np.where(r > 0, tp / safe_r, 0.0)[:, None, None]
    core = f2[:, None, None] * dxdp[:, :, None] * dxdp[:, None, :] + f1[:, None, None] * d2xdp2
    HW = np.einsum("rj,rcd,rl->jcld", B, core, B).reshape(3 * nfree, 3 * nfree)
    mix = f2[:, None] * dxdp * dxdt[:, None] + f1[:, None] * d2xdpdt
    hWT = np.einsum("rj,rc->jc", B, mix).ravel() / N
    hTT = float(np.sum(f2 * dxdt**2 + f1 * d2xdt2)) / N**2
    return float(np.sum(f)), gW, 0.5 * (HW + HW.T), gT, hWT, hTT, act.size


def dynamics_rows(history: SubdivisionHistory, degree: int):
    """Velocity and acceleration control rows ``(B1, B2)`` over ``W``.

    Rows of a sub-piece of relative width ``h`` are divided by ``h`` and
    ``h^2`` so they measure derivatives in the parent parameter.
    """
    S1 = derivative_matrix(degree, 1)
    S2 = derivative_matrix(degree, 2)
    maps = history.stacked_maps()
    h = history.widths()
    B1 = np.einsum("ra,eaf->erf", S1, maps) / h[:, None, None]
    B2 = np.einsum("ra,eaf->erf", S2, maps) / h[:, None, None] ** 2
    return B1.reshape(-1, maps.shape[2]), B2.reshape(-1, maps.shape[2])


def time_barrier(W, T: float, history: SubdivisionHistory, config: SolverConfig,
                 n_pieces: int, order: int = 2) -> BarrierEvaluation:
    """Velocity and acceleration limit barrier on the derivative hulls.

    ``history`` holds the dynamics pieces (the original pieces unless the
    optional dynamics subdivision is enabled); each is flown in ``T / N``.
    """
    W = np.asarray(W, dtype=float)
    if not T > 0:
        return BarrierEvaluation.infeasible_at("non-positive travel time")
    M = history[0].A.shape[0] - 1
    tau = T / n_pieces
    B1, B2 = dynamics_rows(history, M)
    total = None
    for B, lim, pw, name in ((B1, config.v_max, 1, "velocity"), (B2, config.a_max, 2, "acceleration")):
        terms = _norm_limit_terms(B, W, tau, lim, pw, config.x0, n_pieces, order)
        if terms is None:
            return BarrierEvaluation.infeasible_at(f"{name} limit reached")
        val, gW, HW, gT, hWT, hTT, act = terms
        if order == 0:
            ev = BarrierEvaluation(val, None, None, act)
        else:
            g, H = _embed(gW, HW, gT, hWT, hTT)
            ev = BarrierEvaluation(val, g, H, act)
        total = ev if total is None else total + ev
    return total


# --------------------------------------------------------------------------
# jerk energy
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def jerk_gram(degree: int) -> np.ndarray:
    """Gram matrix ``G`` with ``int_0^1 |c'''(s)|^2 ds = w^T G w`` per coordinate."""
    if degree < 3:
        raise ValueError("jerk energy needs degree >= 3")
    n = degree - 3
    Gn = np.array([[comb(n, j) * comb(n, k) / ((2 * n + 1) * comb(2 * n, j + k))
                    for k in range(n + 1)] for j in range(n + 1)])
    S3 = derivative_matrix(degree, 3)
    G = S3.T @ Gn @ S3
    G = 0.5 * (G + G.T)
    G.setflags(write=False)
    return G


def jerk_energy(W, T: float, maps: np.ndarray, order: int = 2) -> BarrierEvaluation:
    """Squared-jerk energy ``sum_i (T/N)^-5 (A_i W)^T G (A_i W)``.

    ``W`` may have any number of coordinate columns; derivatives are only
    assembled for three-column ``W``.
    """
    W = np.asarray(W, dtype=float)
    N, n, nfree = maps.shape
    G = jerk_gram(n - 1)
    Kq = np.einsum("iaf,ab,ibg->fg", maps, G, maps)
    tau = T / N
    KW = Kq @ W
    Q = float(np.sum(W * KW))
    value = tau**-5 * Q
    if order == 0:
        return BarrierEvaluation(value, None, None)
    d = W.shape[1]
    gW = (2.0 * tau**-5 * KW).ravel()
    gT = -5.0 * tau**-6 * Q / N
    HW = np.kron(2.0 * tau**-5 * Kq, np.eye(d)) if order >= 2 else None
    hWT = (-10.0 * tau**-6 * KW / N).ravel()
    hTT = 30.0 * tau**-7 * Q / N**2
    g, H = _embed(gW, HW, gT, hWT, hTT)
    return BarrierEvaluation(value, g, H)


# --------------------------------------------------------------------------
# total objective
# --------------------------------------------------------------------------

def total_objective(W, T: float, history: SubdivisionHistory, env: Environment, bvh: Bvh,
                    config: SolverConfig, mode: str, maps: np.ndarray,
                    dyn_history: SubdivisionHistory | None = None,
                    order: int = 2) -> BarrierEvaluation:
    """``jerk + rho T + lam (collision barrier) + lam (time barrier)``.

    ``maps`` are the composite's per-piece extraction maps; ``dyn_history``
    defaults to one entry per piece.
    """
    if mode not in ("exact", "inexact"):
        raise ValueError(f"unknown mode {mode!r}")
    N = maps.shape[0]
    if dyn_history is None:
        dyn_history = _piece_history(maps)
    tb = time_barrier(W, T, dyn_history, config, N, order)
    if tb.infeasible:
        return tb
    coll = (collision_barrier_exact if mode == "exact" else collision_barrier_inexact)(
        W, T, history, env, bvh, config, order)
    if coll.infeasible:
        return coll
    jerk = jerk_energy(W, T, maps, order)
    n = np.asarray(W).size + 1
    lin = BarrierEvaluation(config.rho * T, None, None)
    if order >= 1:
        g = np.zeros(n)
        g[-1] = config.rho
        lin = BarrierEvaluation(config.rho * T, g, np.zeros((n, n)) if order >= 2 else None)
    return jerk + lin + coll.scaled(config.lam) + tb.scaled(config.lam)


def _piece_history(maps: np.ndarray) -> SubdivisionHistory:
    return SubdivisionHistory(tuple(HistoryEntry(maps[i], i, 0.0, 1.0) for i in range(maps.shape[0])))
