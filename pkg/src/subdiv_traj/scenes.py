"""Small synthetic scenes used by the tests, the acceptance suite and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Environment

__all__ = ["Scene", "SCENES", "box_mesh", "icosphere", "make_scene", "quad_mesh"]


@dataclass(frozen=True)
class Scene:
    """Environment plus an initial piecewise-linear path through free space."""

    name: str
    env: Environment
    waypoints: np.ndarray
    gaps: dict = field(default_factory=dict)     # label -> (xlo, xhi) at the divider plane
    divider_y: float | None = None


def box_mesh(lo, hi):
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    V = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    F = np.array([
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],    # x faces
        [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],    # y faces
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],    # z faces
    ])
    return V, F


def quad_mesh(corner, u, v):
    """Zero-thickness rectangle spanned by ``u`` and ``v`` from ``corner``."""
    c = np.asarray(corner, float)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    V = np.array([c, c + u, c + u + v, c + v])
    return V, np.array([[0, 1, 2], [0, 2, 3]])


def icosphere(center, radius: float, levels: int = 1):
    t = (1.0 + 5**0.5) / 2.0
    V = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    F = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    V = [np.array(v, float) / np.linalg.norm(v) for v in V]
    for _ in range(levels):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = V[a] + V[b]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        nf = []
        for a, b, c in F:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        F = nf
    return np.asarray(center, float) + radius * np.array(V), np.array(F)


def _merge(parts):
    Vs, Fs, off = [], [], 0
    for V, F in parts:
        Vs.append(V)
        Fs.append(F + off)
        off += V.shape[0]
    return Environment.from_mesh(np.vstack(Vs), np.vstack(Fs))


def corridor() -> Scene:
    """L-shaped corridor of width 1.2 m turning left at x = 4."""
    env = _merge([
        box_mesh([-1.0, 0.6, -1.0], [3.4, 5.0, 1.0]),      # inner block
        box_mesh([-1.0, -1.0, -1.0], [5.0, -0.6, 1.0]),    # outer wall, first leg
        box_mesh([4.6, -1.0, -1.0], [5.0, 5.0, 1.0]),      # outer wall, second leg
    ])
    wp = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [4.0, 0.0, 0.0], [4.0, 2.0, 0.0], [4.0, 4.0, 0.0]])
    return Scene("corridor", env, wp)


def thin_double_wall() -> Scene:
    """Two zero-thickness walls at x = -0.2 and x = 0.2; the path detours above them."""
    env = _merge([
        quad_mesh([-0.2, -3.0, -1.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]),
        quad_mesh([0.2, -3.0, -1.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]),
    ])
    wp = np.array([[-1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [1.0, -1.0, 0.0]])
    return Scene("thin_double_wall", env, wp)


def two_passage(label: str = "A") -> Scene:
    """Tall wall in the plane y = 0 with gaps A (x in [-2,-1]) and B (x in [1,2])."""
    env = _merge([
        quad_mesh([-4.0, 0.0, -3.0], [2.0, 0.0, 0.0], [0.0, 0.0, 6.0]),
        quad_mesh([-1.0, 0.0, -3.0], [2.0, 0.0, 0.0], [0.0, 0.0, 6.0]),
        quad_mesh([2.0, 0.0, -3.0], [2.0, 0.0, 0.0], [0.0, 0.0, 6.0]),
    ])
    x = -1.5 if label == "A" else 1.5
    wp = np.array([[0.0, -2.0, 0.0], [x, -0.7, 0.0], [x, 0.7, 0.0], [0.0, 2.0, 0.0]])
    return Scene(f"two_passage_{label}", env, wp,
                 gaps={"A": (-2.0, -1.0), "B": (1.0, 2.0)}, divider_y=0.0)


def single_obstacle(levels: int = 1) -> Scene:
    """Spherical blob of radius 0.8 between the endpoints."""
    env = Environment.from_mesh(*icosphere([0.0, 0.0, 0.0], 0.8, levels))
    wp = np.array([[-5.0, 0.0, 0.0], [-1.5, 1.4, 0.0], [1.5, 1.4, 0.0], [5.0, 0.0, 0.0]])
    return Scene("single_obstacle", env, wp)


def sharp_turn(spacing: str = "even") -> Scene:
    """Box obstacle inside a right-angle turn; two junction spacings along one path."""
    env = Environment.from_mesh(*box_mesh([0.5, -2.0, -1.0], [5.0, 3.5, 1.0]))
    if spacing == "even":
        wp = [[0, 0, 0], [0, 2, 0], [0, 4, 0], [2, 4, 0], [4, 4, 0]]
    else:
        wp = [[0, 0, 0], [0, 3, 0], [0, 4, 0], [1, 4, 0], [4, 4, 0]]
    return Scene(f"sharp_turn_{spacing}", env, np.asarray(wp, float))


def random_scene(n_primitives: int = 50, seed: int = 0) -> Scene:
    """Random triangles, segments and points (``n_primitives`` in total) near a line."""
    rng = np.random.default_rng(seed)
    n_tri = n_primitives // 10
    pts = []
    faces = []
    for i in range(n_tri):
        c = rng.uniform([-2.0, 0.35, -0.5], [2.0, 0.8, 0.5])
        v = c + rng.normal(scale=0.15, size=(3, 3))
        pts.extend(v)
        faces.append([3 * i, 3 * i + 1, 3 * i + 2])
    base = Environment.from_mesh(np.array(pts), np.array(faces))
    n_extra = n_primitives - base.n_primitives
    extra = rng.uniform([-2.0, 0.35, -0.5], [2.0, 0.8, 0.5], size=(max(n_extra, 0), 3))
    P = np.vstack([base.points, extra])
    env = Environment(P, base.segments, base.triangles)
    wp = np.array([[-2.5, -0.1, 0.0], [0.0, 0.0, 0.0], [2.5, -0.1, 0.0]])
    return Scene(f"random_{n_primitives}", env, wp)


SCENES = {
    "corridor": corridor,
    "thin_double_wall": thin_double_wall,
    "two_passage": two_passage,
    "single_obstacle": single_obstacle,
    "sharp_turn": sharp_turn,
    "random": random_scene,
}


def make_scene(name: str, *args, **kw) -> Scene:
    try:
        return SCENES[name](*args, **kw)
    except KeyError:
        raise ValueError(f"unknown scene {name!r}; choose from {sorted(SCENES)}") from None
