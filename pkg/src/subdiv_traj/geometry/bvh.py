"""Median-split AABB hierarchy over environment primitives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .environment import Environment

LEAF_SIZE = 4


@dataclass(frozen=True, eq=False)
class Bvh:
    """Static box tree.  Node and primitive boxes are inflated by ``inflation``."""

    env: Environment
    inflation: float
    node_lo: np.ndarray
    node_hi: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    order: np.ndarray
    prim_lo: np.ndarray
    prim_hi: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.node_lo.shape[0]

    def _arrays(self):
        return (self.node_lo, self.node_hi, self.node_left, self.node_right,
                self.node_start, self.node_count, self.order, self.prim_lo, self.prim_hi)

    def query(self, lo, hi, radius: float | None = None):
        """Candidate primitive ids for each box ``[lo, hi]``.

        Returns a superset of the primitives whose tight box lies within
        ``radius`` (default: the build inflation) of the query box, as CSR
        ``(ptr, ids)``.
        """
        lo = np.ascontiguousarray(np.atleast_2d(lo), dtype=float)
        hi = np.ascontiguousarray(np.atleast_2d(hi), dtype=float)
        r = self.inflation if radius is None else float(radius)
        grow = max(r - self.inflation, 0.0)
        return K.bvh_query(lo, hi, grow, *self._arrays())

    def query_ids(self, lo, hi, radius: float | None = None) -> np.ndarray:
        ptr, ids = self.query(lo, hi, radius)
        return ids[ptr[0]:ptr[1]]

    def nearest(self, points, upper=np.inf, stop_below=-1.0):
        """Distance from conv(points) to the environment and the primitive id.

        Exact when below ``upper``; otherwise returns ``upper`` and id -1.
        """
        X = np.ascontiguousarray(points, dtype=float).reshape(-1, 3)
        kind, ref, cover, verts, nv, _, _ = self.env.primitive_table
        return K.hull_env_min(X, X.shape[0], float(stop_below), float(upper), *self._arrays()[:7],
                              self.prim_lo, self.prim_hi, cover, verts, nv, 1e-10)

    def nearest_batch(self, point_sets, upper, stop_below):
        P = np.ascontiguousarray(point_sets, dtype=float)
        Q = P.shape[0]
        nps = np.full(Q, P.shape[1], dtype=np.int64)
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (Q,)).copy()
        stop_below = np.broadcast_to(np.asarray(stop_below, dtype=float), (Q,)).copy()
        kind, ref, cover, verts, nv, _, _ = self.env.primitive_table
        return K.batch_hull_env_min(P, nps, stop_below, upper, *self._arrays()[:7],
                                    self.prim_lo, self.prim_hi, cover, verts, nv, 1e-10)


def build_bvh(env: Environment, inflation: float = 0.0) -> Bvh:
    """Balanced median split along the longest centroid extent."""
    if env.n_primitives == 0:
        raise ValueError("cannot build a hierarchy over an empty environment")
    _, _, _, verts, nv, lo, hi = env.primitive_table
    plo = np.ascontiguousarray(lo - inflation)
    phi = np.ascontiguousarray(hi + inflation)
    cent = 0.5 * (lo + hi)
    order = np.arange(env.n_primitives, dtype=np.int64)
    nodes_lo, nodes_hi, left, right, start, count = [], [], [], [], [], []

    def new_node():
        nodes_lo.append(None)
        nodes_hi.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(left) - 1

    root = new_node()
    stack = [(root, 0, env.n_primitives)]
    while stack:
        node, a, b = stack.pop()
        ids = order[a:b]
        nodes_lo[node] = plo[ids].min(axis=0)
        nodes_hi[node] = phi[ids].max(axis=0)
        if b - a <= LEAF_SIZE:
            start[node] = a
            count[node] = b - a
            continue
        c = cent[ids]
        axis = int(np.argmax(np.ptp(c, axis=0)))
        perm = np.argsort(c[:, axis], kind="stable")
        order[a:b] = ids[perm]
        mid = (a + b) // 2
        l, r = new_node(), new_node()
        left[node] = l
        right[node] = r
        stack.append((l, a, mid))
        stack.append((r, mid, b))
    return Bvh(env, float(inflation),
               np.ascontiguousarray(nodes_lo), np.ascontiguousarray(nodes_hi),
               np.asarray(left, np.int64), np.asarray(right, np.int64),
               np.asarray(start, np.int64), np.asarray(count, np.int64),
               order, plo, phi)
