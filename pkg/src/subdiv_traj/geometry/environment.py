"""Obstacle geometry as points, segments and triangles."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._kernels import KIND_POINT, KIND_SEGMENT, KIND_TRIANGLE

log = logging.getLogger(__name__)

POINT_CLOUD = "point-cloud"
TRIANGLE_MESH = "triangle-mesh"


@dataclass(frozen=True, eq=False)
class Environment:
    """Obstacle primitives ``<P, L, T>``.

    A point cloud has empty ``segments`` and ``triangles``.  Meshes carry
    all vertices, the deduplicated edge set and the faces.
    """

    points: np.ndarray
    segments: np.ndarray
    triangles: np.ndarray
    source_kind: str = TRIANGLE_MESH

    def __post_init__(self):
        P = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 3)
        L = np.ascontiguousarray(self.segments, dtype=np.int64).reshape(-1, 2)
        T = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if P.shape[0] == 0:
            raise ValueError("environment has no points")
        if not np.all(np.isfinite(P)):
            raise ValueError("environment contains non-finite coordinates")
        for name, idx in (("segment", L), ("triangle", T)):
            if idx.size and (idx.min() < 0 or idx.max() >= P.shape[0]):
                raise ValueError(f"{name} index out of range")
        if self.source_kind not in (POINT_CLOUD, TRIANGLE_MESH):
            raise ValueError(f"unknown source kind {self.source_kind!r}")
        if self.source_kind == POINT_CLOUD and (L.size or T.size):
            raise ValueError("a point cloud carries no segments or triangles")
        for arr in (P, L, T):
            arr.setflags(write=False)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "segments", L)
        object.__setattr__(self, "triangles", T)

    @classmethod
    def from_points(cls, points) -> "Environment":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(pts, np.zeros((0, 2), np.int64), np.zeros((0, 3), np.int64), POINT_CLOUD)

    @classmethod
    def from_mesh(cls, vertices, faces) -> "Environment":
        """Mesh from vertices and triangular faces; zero-area faces are dropped."""
        V = np.asarray(vertices, dtype=float).reshape(-1, 3)
        F = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if F.size:
            area2 = np.linalg.norm(np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]]), axis=1)
            scale = np.max(np.ptp(V, axis=0)) if V.shape[0] > 1 else 1.0
            keep = area2 > 1e-14 * max(scale, 1e-300) ** 2
            dropped = int(np.count_nonzero(~keep))
            if dropped:
                log.warning("dropped %d degenerate triangle(s)", dropped)
            F = F[keep]
        edges = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]) if F.size else np.zeros((0, 2), np.int64)
        edges = np.unique(np.sort(edges, axis=1), axis=0)
        return cls(V, edges, F, TRIANGLE_MESH)

    @property
    def n_primitives(self) -> int:
        return self.points.shape[0] + self.segments.shape[0] + self.triangles.shape[0]

    @cached_property
    def primitive_table(self):
        """Flat primitive arrays: kinds, refs, cover flags, padded vertices."""
        nP, nL, nT = self.points.shape[0], self.segments.shape[0], self.triangles.shape[0]
        kind = np.concatenate([np.full(nP, KIND_POINT), np.full(nL, KIND_SEGMENT),
                               np.full(nT, KIND_TRIANGLE)]).astype(np.int64)
        ref = np.concatenate([np.arange(nP), np.arange(nL), np.arange(nT)]).astype(np.int64)
        verts = np.empty((kind.size, 3, 3))
        verts[:nP] = self.points[:, None, :]
        if nL:
            verts[nP:nP + nL, :2] = self.points[self.segments]
            verts[nP:nP + nL, 2] = verts[nP:nP + nL, 1]
        if nT:
            verts[nP + nL:] = self.points[self.triangles]
        nv = kind + 1
        # a primitive "covers" space unless it is a face of a larger primitive
        used_by_seg = np.zeros(nP, bool)
        used_by_seg[self.segments.ravel()] = True
        used_by_tri = np.zeros(nP, bool)
        used_by_tri[self.triangles.ravel()] = True
        tri_edges = set()
        for a, b, c in self.triangles:
            for i, j in ((a, b), (b, c), (c, a)):
                tri_edges.add((min(i, j), max(i, j)))
        seg_cover = np.array([(min(i, j), max(i, j)) not in tri_edges for i, j in self.segments], bool)
        cover = np.concatenate([~(used_by_seg | used_by_tri), seg_cover, np.ones(nT, bool)])
        lo = verts.min(axis=1)
        hi = verts.max(axis=1)
        return kind, ref, cover, np.ascontiguousarray(verts), nv.astype(np.int64), lo, hi

    def primitive_vertices(self, pid: int) -> np.ndarray:
        kind, _, _, verts, nv, _, _ = self.primitive_table
        return verts[pid, :nv[pid]].copy()

    def describe_primitive(self, pid: int) -> str:
        kind, ref, *_ = self.primitive_table
        name = {KIND_POINT: "point", KIND_SEGMENT: "segment", KIND_TRIANGLE: "triangle"}[int(kind[pid])]
        return f"{name} {int(ref[pid])}"
