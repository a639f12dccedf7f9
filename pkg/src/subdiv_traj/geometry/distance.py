"""Distances between primitives and between convex hulls and the environment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .bvh import Bvh
from .environment import Environment


class OverlapError(ValueError):
    """Two primitives touch or intersect; the barrier is infinite there."""


@dataclass(frozen=True)
class PairDistance:
    value: float
    gradient: np.ndarray     # (na + nb, 3), first primitive's vertices first
    hessian: np.ndarray      # (3(na+nb), 3(na+nb))


def _as_simplex(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape[1] != 3 or not 1 <= a.shape[0] <= 3:
        raise ValueError("primitive must be a point, segment or triangle in 3-space")
    return a


def primitive_distance(a, b) -> PairDistance:
    """Euclidean distance between two primitives with gradient and Hessian.

    ``a`` and ``b`` are ``(k, 3)`` vertex arrays with ``k`` in {1, 2, 3}
    (triangle-triangle is not supported).  Derivatives are with respect to
    all vertex coordinates, ``a`` first.
    """
    A = _as_simplex(a)
    B = _as_simplex(b)
    na, nb = A.shape[0], B.shape[0]
    if na == 3 and nb == 3:
        raise ValueError("triangle-triangle pairs are not a supported class")
    swap = False
    if na == 2 and nb == 2 and tuple(B.ravel()) < tuple(A.ravel()):
        A, B, swap = B, A, True
    VA = np.zeros((3, 3))
    VB = np.zeros((3, 3))
    VA[:na] = A
    VB[:nb] = B
    alpha = np.zeros(3)
    beta = np.zeros(3)
    d2 = K.pair_closest(na - 1, VA, nb - 1, VB, alpha, beta)
    # contact computed in floating point leaves a residue at rounding scale
    scale = max(np.abs(A).max(), np.abs(B).max(), 1.0)
    if not d2 > (64.0 * np.finfo(float).eps * scale) ** 2:
        raise OverlapError("primitives touch")
    g = np.zeros((6, 3))
    H = np.zeros((18, 18))
    K.sqdist_jet(VA, alpha, na, VB, beta, nb, g, H)
    d = K.sq_to_dist(d2, g, H, na + nb)
    nv = na + nb
    g = g[:nv].copy()
    H = H[:3 * nv, :3 * nv].copy()
    if swap:
        perm = np.r_[np.arange(na, nv), np.arange(na)]
        g = g[perm]
        p3 = (3 * perm[:, None] + np.arange(3)).ravel()
        H = H[np.ix_(p3, p3)]
    return PairDistance(float(d), g, H)


def gjk_distance(hull_a, hull_b, tol: float = 1e-10) -> float:
    """Distance between the convex hulls of two point sets."""
    X = np.ascontiguousarray(hull_a, dtype=float).reshape(-1, 3)
    Y = np.ascontiguousarray(hull_b, dtype=float).reshape(-1, 3)
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("point sets must be non-empty")
    return float(K.gjk_distance(X, X.shape[0], Y, Y.shape[0], tol))


def hull_env_distance(w, env: Environment, bvh: Bvh, upper: float = np.inf) -> float:
    """Distance from conv(w) to the environment (exact below ``upper``)."""
    d, _ = bvh.nearest(w, upper=upper)
    return float(d)


def swept_hull_safe(w, w_prime, env: Environment, bvh: Bvh, clearance: float) -> bool:
    """True iff conv(w U w') stays strictly farther than ``clearance`` from env.

    The union hull contains every hull along the straight-line motion from
    ``w`` to ``w'``, so this certifies the whole interpolation.
    """
    w = np.asarray(w, dtype=float).reshape(-1, 3)
    wp = np.asarray(w_prime, dtype=float).reshape(-1, 3)
    if w.shape != wp.shape:
        raise ValueError("w and w_prime must have the same number of points")
    d, _ = bvh.nearest(np.vstack([w, wp]), upper=clearance + 1e-9, stop_below=clearance)
    return bool(d > clearance)
