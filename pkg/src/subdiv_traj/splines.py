"""Composite Bézier trajectories.

A trajectory is ``N`` Bézier pieces of common degree ``M`` whose control
points are linear images of one free decision matrix ``W``::

    controls(i) = maps[i] @ W          # (M+1, nfree) @ (nfree, 3)

The maps encode C^k continuity across junctions, so every ``W`` yields an
admissible curve.  Each piece is flown in ``T / N`` seconds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import comb

import numpy as np

__all__ = [
    "BezierPiece",
    "CompositeTrajectory",
    "HistoryEntry",
    "SubdivisionHistory",
    "build_composite",
    "continuity_maps",
    "control_polygon_length",
    "de_casteljau",
    "derivative_controls",
    "derivative_matrix",
    "evaluate",
    "hull_diameter",
    "hull_edges",
    "hull_triangles",
    "split_matrices",
    "subdivide",
]


@dataclass(frozen=True)
class BezierPiece:
    """A single Bézier curve given by its ``(M+1, dim)`` control points."""

    control_points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.control_points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("control_points must have shape (M+1, dim)")
        pts.setflags(write=False)
        object.__setattr__(self, "control_points", pts)

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1

    def __call__(self, s):
        return evaluate(self, s)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def de_casteljau(controls: np.ndarray, s) -> np.ndarray:
    """Evaluate control points at one or many parameters.

    ``controls`` has shape ``(M+1, dim)``; ``s`` a scalar or 1-D array.
    Returns ``(dim,)`` or ``(len(s), dim)``.
    """
    P = np.asarray(controls, dtype=float)
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=float))
    b = np.broadcast_to(P, (s.size,) + P.shape).copy()
    t = s[:, None]
    for r in range(P.shape[0] - 1, 0, -1):
        b[:, :r] = (1.0 - t[:, None]) * b[:, :r] + t[:, None] * b[:, 1:r + 1]
    out = b[:, 0]
    return out[0] if scalar else out


def evaluate(piece: BezierPiece, s: float) -> np.ndarray:
    """Point of ``piece`` at parameter ``s`` in [0, 1]."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > 1.0) or np.any(np.isnan(s_arr)):
        raise ValueError(f"parameter outside [0, 1]: {s}")
    return de_casteljau(piece.control_points, s)


# --------------------------------------------------------------------------
# stencils
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def split_matrices(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint subdivision stencils ``(D1, D2)`` for a degree-``M`` piece.

    ``D1 @ w`` reproduces the parent on s in [0, 1/2], ``D2 @ w`` on [1/2, 1].
    """
    n = degree + 1
    D1 = np.zeros((n, n))
    D2 = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            D1[i, j] = comb(i, j) / 2.0**i
    for i in range(n):
        r = degree - i
        for j in range(r + 1):
            D2[i, degree - j] = comb(r, j) / 2.0**r
    D1.setflags(write=False)
    D2.setflags(write=False)
    return D1, D2


@lru_cache(maxsize=None)
def derivative_matrix(degree: int, order: int) -> np.ndarray:
    """Stencil mapping controls to the controls of the ``order``-th s-derivative."""
    if order < 0 or order > degree:
        raise ValueError(f"derivative order {order} invalid for degree {degree}")
    S = np.eye(degree + 1)
    for r in range(order):
        m = degree - r
        step = np.zeros((m, m + 1))
        idx = np.arange(m)
        step[idx, idx] = -m
        step[idx, idx + 1] = m
        S = step @ S
    S.setflags(write=False)
    return S


@lru_cache(maxsize=None)
def hull_edges(degree: int) -> np.ndarray:
    """All ``(M+1)M/2`` vertex pairs of a control polygon."""
    n = degree + 1
    e = np.array([(i, j) for i in range(n) for j in range(i + 1, n)], dtype=np.int64)
    e = e.reshape(-1, 2)
    e.setflags(write=False)
    return e


@lru_cache(maxsize=None)
def hull_triangles(degree: int) -> np.ndarray:
    """All ``(M+1)M(M-1)/6`` vertex triples of a control polygon."""
    n = degree + 1
    t = np.array([(i, j, k) for i in range(n) for j in range(i + 1, n)
                  for k in range(j + 1, n)], dtype=np.int64)
    t = t.reshape(-1, 3)
    t.setflags(write=False)
    return t


def subdivide(piece: BezierPiece) -> tuple[BezierPiece, BezierPiece]:
    D1, D2 = split_matrices(piece.degree)
    w = piece.control_points
    return BezierPiece(D1 @ w), BezierPiece(D2 @ w)


def derivative_controls(piece: BezierPiece, order: int) -> BezierPiece:
    if order > piece.degree:
        raise ValueError(f"order {order} exceeds degree {piece.degree}")
    return BezierPiece(derivative_matrix(piece.degree, order) @ piece.control_points)


def hull_diameter(piece_or_controls) -> float:
    """Largest pairwise distance between control points."""
    w = _controls(piece_or_controls)
    diff = w[:, None, :] - w[None, :, :]
    return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diff, diff))))


def control_polygon_length(piece_or_controls) -> float:
    w = _controls(piece_or_controls)
    return float(np.sum(np.linalg.norm(np.diff(w, axis=0), axis=1)))


def _controls(x) -> np.ndarray:
    if isinstance(x, BezierPiece):
        return x.control_points
    return np.asarray(x, dtype=float)


# --------------------------------------------------------------------------
# composite curves
# --------------------------------------------------------------------------

def continuity_maps(n_pieces: int, degree: int, continuity: int) -> np.ndarray:
    """Extraction maps ``A_i`` of shape ``(N, M+1, nfree)``.

    Free variables are all controls of the first piece followed by controls
    ``k+1 .. M`` of every later piece; controls ``0 .. k`` of piece ``i+1``
    are eliminated through the C^k junction equations with piece ``i``.
    """
    N, M, k = n_pieces, degree, continuity
    if N < 1:
        raise ValueError("need at least one piece")
    if k < 0:
        raise ValueError("continuity order must be non-negative")
    if M < max(3, k + 1):
        raise ValueError(f"degree {M} too low for C^{k} continuity (need M >= max(3, k+1))")
    nfree = (M + 1) + (N - 1) * (M - k)
    maps = np.zeros((N, M + 1, nfree))
    maps[0] = np.eye(M + 1, nfree)
    col = M + 1
    for i in range(1, N):
        prev = maps[i - 1]
        cur = maps[i]
        for r in range(k + 1):
            row = np.zeros(nfree)
            for j in range(r + 1):
                sign = (-1) ** (r - j) * comb(r, j)
                row += sign * prev[M - r + j]
            for j in range(r):
                row -= (-1) ** (r - j) * comb(r, j) * cur[j]
            cur[r] = row
        for r in range(k + 1, M + 1):
            cur[r, col] = 1.0
            col += 1
    assert col == nfree
    maps.setflags(write=False)
    return maps


@dataclass(frozen=True)
class CompositeTrajectory:
    """Decision matrix ``W`` (nfree, 3), travel time ``T`` and extraction maps."""

    W: np.ndarray
    T: float
    maps: np.ndarray
    continuity: int

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != self.maps.shape[2]:
            raise ValueError("W does not match the extraction maps")
        if not self.T > 0:
            raise ValueError("travel time must be positive")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "T", float(self.T))

    @property
    def n_pieces(self) -> int:
        return self.maps.shape[0]

    @property
    def degree(self) -> int:
        return self.maps.shape[1] - 1

    @property
    def n_free(self) -> int:
        return self.maps.shape[2]

    def with_state(self, W, T) -> "CompositeTrajectory":
        return CompositeTrajectory(W, T, self.maps, self.continuity)

    def controls(self, i: int | None = None) -> np.ndarray:
        if i is None:
            return np.einsum("iaf,fc->iac", self.maps, self.W)
        return self.maps[i] @ self.W

    def piece(self, i: int) -> BezierPiece:
        return BezierPiece(self.controls(i))

    def _locate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tau = self.T / self.n_pieces
        idx = np.clip(np.floor(t / tau).astype(int), 0, self.n_pieces - 1)
        s = np.clip(t / tau - idx, 0.0, 1.0)
        return idx, s, tau

    def sample(self, t, order: int = 0) -> np.ndarray:
        """Position (order 0) or time derivatives at global times ``t``."""
        idx, s, tau = self._locate(t)
        out = np.empty((idx.size, self.W.shape[1]))
        ctrl = self.controls()
        for i in np.unique(idx):
            sel = idx == i
            c = derivative_matrix(self.degree, order) @ ctrl[i] if order else ctrl[i]
            out[sel] = de_casteljau(c, s[sel]) / tau**order
        return out

    def fixed_rows(self) -> np.ndarray:
        """Rows of ``W`` holding the start and goal points (kept fixed by solvers)."""
        first = int(np.flatnonzero(self.maps[0, 0])[0])
        last = int(np.flatnonzero(self.maps[-1, -1])[0])
        return np.array(sorted({first, last}), dtype=np.int64)


def build_composite(init, n_pieces: int | None = None, degree: int = 8,
                    continuity: int = 2, T: float = 1.0) -> CompositeTrajectory:
    """Build a C^k composite trajectory.

    ``init`` is either per-piece control points ``(N, M+1, 3)`` or waypoints
    ``(N+1, 3)``; in the latter case piece ``i`` starts as the straight
    segment between waypoints ``i`` and ``i+1`` with equispaced controls.
    ``W`` is then the least-squares fit of the given controls under the
    continuity maps, with the start and goal points held exactly.
    """
    arr = np.asarray(init, dtype=float)
    if arr.ndim == 2:
        if arr.shape[0] < 2:
            raise ValueError("need at least two waypoints")
        if np.any(np.linalg.norm(np.diff(arr, axis=0), axis=1) <= 1e-12):
            raise ValueError("degenerate (repeated) consecutive waypoints")
        s = np.linspace(0.0, 1.0, degree + 1)[None, :, None]
        arr = arr[:-1, None, :] * (1.0 - s) + arr[1:, None, :] * s
    elif arr.ndim == 3:
        degree = arr.shape[1] - 1
    else:
        raise ValueError("initializer must be waypoints (N+1, 3) or controls (N, M+1, 3)")
    if n_pieces is not None and n_pieces != arr.shape[0]:
        raise ValueError(f"initializer describes {arr.shape[0]} pieces, expected {n_pieces}")
    maps = continuity_maps(arr.shape[0], degree, continuity)
    A = maps.reshape(-1, maps.shape[2])
    target = arr.reshape(-1, arr.shape[2])
    first = int(np.flatnonzero(maps[0, 0])[0])
    last = int(np.flatnonzero(maps[-1, -1])[0])
    pinned = sorted({first, last})
    W = np.zeros((maps.shape[2], arr.shape[2]))
    W[first] = arr[0, 0]
    W[last] = arr[-1, -1]
    free = np.setdiff1d(np.arange(maps.shape[2]), pinned)
    rhs = target - A[:, pinned] @ W[pinned]
    if free.size:
        W[free] = np.linalg.lstsq(A[:, free], rhs, rcond=None)[0]
    return CompositeTrajectory(W, T, maps, continuity)


# --------------------------------------------------------------------------
# subdivision history
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HistoryEntry:
    """One leaf of the adaptive subdivision: ``controls = A @ W``.

    ``path`` records the stencil sequence (1 = left half, 2 = right half)
    applied to ``maps[piece]``.
    """

    A: np.ndarray
    piece: int
    lo: float
    hi: float
    path: tuple = ()

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def children(self) -> tuple["HistoryEntry", "HistoryEntry"]:
        D1, D2 = split_matrices(self.A.shape[0] - 1)
        mid = 0.5 * (self.lo + self.hi)
        a = D1 @ self.A
        b = D2 @ self.A
        a.setflags(write=False)
        b.setflags(write=False)
        return (HistoryEntry(a, self.piece, self.lo, mid, self.path + (1,)),
                HistoryEntry(b, self.piece, mid, self.hi, self.path + (2,)))


@dataclass(frozen=True)
class SubdivisionHistory:
    """Ordered leaves of the subdivision, sorted by (piece, interval)."""

    entries: tuple = field(default_factory=tuple)

    @classmethod
    def initial(cls, traj: CompositeTrajectory) -> "SubdivisionHistory":
        return cls(tuple(HistoryEntry(traj.maps[i], i, 0.0, 1.0)
                         for i in range(traj.n_pieces)))

    @classmethod
    def uniform(cls, traj: CompositeTrajectory, levels: int) -> "SubdivisionHistory":
        h = cls.initial(traj)
        for _ in range(levels):
            h = h.split(range(len(h)))
        return h

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def split(self, indices) -> "SubdivisionHistory":
        """Replace the entries at ``indices`` with their two midpoint children."""
        indices = set(indices)
        out = []
        for i, e in enumerate(self.entries):
            if i in indices:
                out.extend(e.children())
            else:
                out.append(e)
        return SubdivisionHistory(tuple(out))

    @cached_property
    def _stacked(self) -> np.ndarray:
        maps = np.stack([e.A for e in self.entries])
        maps.setflags(write=False)
        return maps

    def stacked_maps(self) -> np.ndarray:
        return self._stacked

    def controls(self, W: np.ndarray) -> np.ndarray:
        """Leaf control points ``(E, M+1, 3)`` for decision matrix ``W``."""
        return np.einsum("eaf,fc->eac", self.stacked_maps(), W)

    def widths(self) -> np.ndarray:
        return np.array([e.width for e in self.entries])

    def reconstruct(self, maps: np.ndarray, entry: HistoryEntry) -> np.ndarray:
        """Rebuild an entry's map from its stencil path (consistency check)."""
        D1, D2 = split_matrices(maps.shape[1] - 1)
        A = maps[entry.piece]
        for step in entry.path:
            A = (D1 if step == 1 else D2) @ A
        return A


def jerk_free_count(n_pieces: int, degree: int, continuity: int) -> int:
    return n_pieces * (degree + 1) - (n_pieces - 1) * (continuity + 1)

