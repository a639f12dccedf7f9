"""Independent oracles: finite differences, quadrature, dense sampling audits.

Nothing here calls the analytic derivative or distance code of the
library.  Curves are evaluated in Bernstein form, distances by brute force
over all primitives, so a defect in the production paths cannot hide
behind a shared helper.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "AuditReport",
    "Check",
    "QuadratureResult",
    "adaptive_quadrature",
    "bernstein_eval",
    "compare",
    "counterexample_modified",
    "counterexample_original",
    "dense_feasibility_audit",
    "fd_gradient",
    "fd_hessian",
    "gradient_audit",
    "passage_classify",
    "point_env_distances",
    "quadrature_Bhat",
]


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    measured: float | list
    expected: float | list
    tolerance: float
    error: float
    passed: bool


def compare(name: str, measured, expected, tolerance: float) -> Check:
    """Relative error ``|m - e|_inf / |e|_inf`` (absolute when ``e`` is zero)."""
    m = np.asarray(measured, dtype=float)
    e = np.asarray(expected, dtype=float)
    if m.shape != e.shape:
        raise ValueError(f"{name}: shape mismatch {m.shape} vs {e.shape}")
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(e))):
        err = math.inf
    else:
        diff = float(np.max(np.abs(m - e))) if m.size else 0.0
        scale = float(np.max(np.abs(e))) if e.size else 0.0
        err = diff / scale if scale > 0 else diff
    as_py = (lambda a: float(a) if a.ndim == 0 else a.tolist())
    return Check(name, as_py(m), as_py(e), float(tolerance), err, bool(err <= tolerance))


@dataclass
class AuditReport:
    checks: list[Check] = field(default_factory=list)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst_relative_error(self) -> float:
        return max((c.error for c in self.checks), default=0.0)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: error {c.error:.3e} (tol {c.tolerance:.1e})"
                 for c in self.checks]
        return "\n".join(lines)

    def to_json(self, brief: bool = True) -> str:
        out = {"passed": self.passed, "worst_relative_error": self.worst_relative_error, "checks": []}
        for c in self.checks:
            d = asdict(c)
            if brief and isinstance(c.measured, list):
                d.pop("measured")
                d.pop("expected")
            out["checks"].append(d)
        return json.dumps(out, indent=2, default=float)


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------

def _scalar(v) -> float:
    """Accept plain numbers or objects with ``value``/``infeasible``."""
    if hasattr(v, "infeasible") and getattr(v, "infeasible"):
        return math.inf
    if hasattr(v, "value"):
        v = v.value
    return float(v)


def fd_gradient(f: Callable, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient.

    Coordinates whose probes are infeasible (infinite, NaN or raising) are
    reported as NaN so callers cannot mistake them for zero.
    """
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += step
        xm.flat[i] -= step
        try:
            fp = _scalar(f(xp))
            fm = _scalar(f(xm))
        except (ValueError, ArithmeticError):
            g[i] = math.nan
            continue
        g[i] = (fp - fm) / (2 * step) if math.isfinite(fp) and math.isfinite(fm) else math.nan
    return g.reshape(x.shape)


def fd_hessian(grad: Callable, x, step: float = 1e-4) -> np.ndarray:
    """Central differences of a gradient function, symmetrized."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        try:
            gp = np.asarray(grad(xp), dtype=float).ravel()
            gm = np.asarray(grad(xm), dtype=float).ravel()
            H[:, i] = (gp - gm) / (2 * step)
        except (ValueError, ArithmeticError, TypeError):
            H[:, i] = math.nan
    return 0.5 * (H + H.T)


def gradient_audit(value: Callable, grad: Callable, x, analytic_grad, analytic_hess=None,
                   name: str = "objective", grad_step: float = 1e-6, hess_step: float = 1e-4,
                   grad_tol: float = 1e-5, hess_tol: float = 1e-3,
                   report: AuditReport | None = None) -> AuditReport:
    """Compare analytic derivatives against finite differences.

    ``value`` maps a flat vector to a scalar; ``grad`` to the analytic
    gradient (only used to difference the Hessian).
    """
    report = report or AuditReport()
    x = np.asarray(x, dtype=float)
    report.add(compare(f"{name}.grad", analytic_grad, fd_gradient(value, x, grad_step), grad_tol))
    if analytic_hess is not None:
        report.add(compare(f"{name}.hess", analytic_hess, fd_hessian(grad, x, hess_step), hess_tol))
    return report


# --------------------------------------------------------------------------
# curves and distances (independent implementations)
# --------------------------------------------------------------------------

def bernstein_eval(controls, s, order: int = 0) -> np.ndarray:
    """Bernstein-form evaluation of a Bezier curve or its s-derivatives."""
    c = np.asarray(controls, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    for _ in range(order):
        m = c.shape[0] - 1
        if m < 1:
            return np.zeros((s.size, c.shape[1]))
        c = m * (c[1:] - c[:-1])
    m = c.shape[0] - 1
    B = np.stack([comb(m, j) * s**j * (1.0 - s) ** (m - j) for j in range(m + 1)], axis=1)
    return B @ c


def _pt_seg(p, a, b):
    """Distances ``(S, K)`` from points ``p (S,3)`` to segments ``a, b (K,3)``."""
    ab = b - a
    den = np.einsum("kc,kc->k", ab, ab)
    t = np.einsum("skc,kc->sk", p[:, None, :] - a[None], ab) / np.where(den > 0, den, 1.0)
    t = np.clip(np.where(den > 0, t, 0.0), 0.0, 1.0)
    q = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - q, axis=-1)


def _pt_tri(p, a, b, c):
    """Distances ``(S, K)`` from points to triangles (interior or boundary)."""
    n = np.cross(b - a, c - a)
    nn = np.einsum("kc,kc->k", n, n)
    rel = p[:, None, :] - a[None]
    h = np.einsum("skc,kc->sk", rel, n) / np.where(nn > 0, nn, 1.0)
    proj = p[:, None, :] - h[..., None] * n[None]
    # inside test via signs of edge cross products against the normal
    def side(u, v):
        return np.einsum("skc,kc->sk", np.cross(v[None] - u[None], proj - u[None]), n)
    inside = (side(a, b) >= 0) & (side(b, c) >= 0) & (side(c, a) >= 0) & (nn > 0)[None]
    plane = np.abs(h) * np.sqrt(nn)[None]
    edge = np.minimum(np.minimum(_pt_seg(p, a, b), _pt_seg(p, b, c)), _pt_seg(p, c, a))
    return np.where(inside, plane, edge)


def _covering(env):
    """Covering primitive lists (points, segments, triangles) of an environment."""
    P, L, T = np.asarray(env.points), np.asarray(env.segments), np.asarray(env.triangles)
    tri_edges = set()
    for a, b, c in T:
        tri_edges |= {tuple(sorted(e)) for e in ((a, b), (b, c), (c, a))}
    segs = np.array([s for s in L if tuple(sorted(s)) not in tri_edges], dtype=np.int64).reshape(-1, 2)
    used = np.zeros(P.shape[0], bool)
    used[L.ravel()] = True
    used[T.ravel()] = True
    return P[~used], segs, T


def point_env_distances(points, env, per_primitive: bool = False, chunk: int = 2048):
    """Brute-force distances from points to every covering primitive.

    Returns ``(S,)`` minima, or ``(S, K)`` per-primitive distances.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    P, L, T = _covering(env)
    V = np.asarray(env.points)
    out = []
    for i in range(0, p.shape[0], chunk):
        q = p[i:i + chunk]
        cols = []
        if P.shape[0]:
            cols.append(np.linalg.norm(q[:, None, :] - P[None], axis=-1))
        if L.shape[0]:
            cols.append(_pt_seg(q, V[L[:, 0]], V[L[:, 1]]))
        if T.shape[0]:
            cols.append(_pt_tri(q, V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]))
        D = np.concatenate(cols, axis=1)
        out.append(D if per_primitive else D.min(axis=1))
    return np.concatenate(out, axis=0)


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

# 8-point Gauss-Legendre nodes avoid both the endpoints and the midpoint, so an
# integrable endpoint singularity is sampled but never evaluated directly.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    diverged: bool
    max_depth: int
    evaluations: int
    history: tuple = ()     # running totals when the depth cap was raised stepwise


def _gauss(f, a, b):
    x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    return 0.5 * (b - a) * float(np.dot(_GL_W, f(x)))


def adaptive_quadrature(f: Callable, a: float, b: float, tol: float = 1e-10,
                        max_depth: int = 40) -> QuadratureResult:
    """Adaptive interval halving with an 8-point Gauss rule.

    An interval is accepted when its two halves agree with the whole to
    within the local share of ``tol``.  Intervals still unresolved at
    ``max_depth`` (width ``(b-a) 2^-max_depth``) are summed as they are;
    the divergence flag is raised when such an interval still carries an
    error estimate above ``tol``.
    """
    f_vec = lambda x: np.asarray(f(x), dtype=float)
    total = 0.0
    diverged = False
    deepest = 0
    evals = 0
    stack = [(a, b, _gauss(f_vec, a, b), 0)]
    evals += 1
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left = _gauss(f_vec, lo, mid)
        right = _gauss(f_vec, mid, hi)
        evals += 2
        deepest = max(deepest, depth + 1)
        local_tol = tol * (hi - lo) / (b - a)
        if not math.isfinite(left + right):
            diverged = True
            total = math.inf
            break
        if abs(left + right - whole) <= max(local_tol, 1e-300):
            total += left + right
        elif depth + 1 >= max_depth:
            # an integrable singularity leaves a vanishing remainder at the
            # cap; a divergent one does not
            total += left + right
            if abs(left + right - whole) > tol:
                diverged = True
        else:
            stack.append((mid, hi, right, depth + 1))
            stack.append((lo, mid, left, depth + 1))
    return QuadratureResult(total, diverged, deepest, evals)


def _clog_original(x, x0):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x < x0
    out[m] = -((x[m] - x0) ** 2) * np.log(x[m] / x0)
    return out


def _clog_modified(x, x0):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x < x0
    out[m] = -((x[m] - x0) ** 2 / x[m]) * np.log(x[m] / x0)
    return out


def counterexample_original(tol: float = 1e-10, max_depth: int = 40) -> QuadratureResult:
    """Touching curve with the unmodified barrier; the exact value is 11/72."""
    return adaptive_quadrature(lambda s: _clog_original(np.abs(s - 0.5), 0.5), 0.0, 1.0, tol, max_depth)


def counterexample_modified(tol: float = 1e-6, depths: Sequence[int] = tuple(range(5, 41, 5))
                            ) -> QuadratureResult:
    """Same touching curve with the modified barrier, refined to growing depth caps.

    Returns the deepest run; ``history`` holds the totals per cap so growth
    can be inspected.
    """
    f = lambda s: _clog_modified(np.abs(s - 0.5), 0.5)
    runs = [adaptive_quadrature(f, 0.0, 1.0, tol, d) for d in depths]
    last = runs[-1]
    return QuadratureResult(last.value, last.diverged, last.max_depth, last.evaluations,
                            tuple((d, r.value) for d, r in zip(depths, runs)))


def quadrature_Bhat(W, maps, env, d0: float, x0: float, tol: float = 1e-8,
                    max_depth: int = 40, aggregate: str = "sum") -> QuadratureResult:
    """Parameter integral of the barrier along the exact curve.

    For each piece, integrates ``clog(dist(curve(s), q) - d0)`` over
    ``s`` in [0, 1].  ``aggregate="sum"`` sums over covering primitives
    ``q`` (the structure of the library's chord barrier); ``"min"`` uses the
    distance to the whole environment.
    """
    W = np.asarray(W, dtype=float)
    maps = np.asarray(maps, dtype=float)
    total = 0.0
    diverged = False
    deepest = 0
    evals = 0
    for A in maps:
        ctrl = A @ W

        def integrand(s, ctrl=ctrl):
            pts = bernstein_eval(ctrl, s)
            if aggregate == "min":
                x = point_env_distances(pts, env) - d0
                if np.any(x <= 0):
                    return np.full(s.shape, np.inf)
                return _clog_modified(x, x0)
            D = point_env_distances(pts, env, per_primitive=True) - d0
            if np.any(D <= 0):
                return np.full(s.shape, np.inf)
            return _clog_modified(D, x0).sum(axis=1)

        r = adaptive_quadrature(integrand, 0.0, 1.0, tol, max_depth)
        total += r.value
        diverged |= r.diverged
        deepest = max(deepest, r.max_depth)
        evals += r.evaluations
    return QuadratureResult(total, diverged, deepest, evals)


# --------------------------------------------------------------------------
# sampled audits
# --------------------------------------------------------------------------

def dense_feasibility_audit(W, T: float, maps, env, d0: float, samples_per_piece: int = 1024,
                            v_max: float | None = None, a_max: float | None = None) -> AuditReport:
    """Sampled clearance, speed and acceleration of the curve.

    Passes when the minimum sampled clearance exceeds ``d0 - 1e-9`` and the
    sampled speed and acceleration do not exceed the limits.
    """
    W = np.asarray(W, dtype=float)
    maps = np.asarray(maps, dtype=float)
    N = maps.shape[0]
    tau = T / N
    s = np.linspace(0.0, 1.0, samples_per_piece)
    pts, vel, acc = [], [], []
    for A in maps:
        c = A @ W
        pts.append(bernstein_eval(c, s))
        vel.append(bernstein_eval(c, s, 1) / tau)
        acc.append(bernstein_eval(c, s, 2) / tau**2)
    pts = np.concatenate(pts)
    dist = point_env_distances(pts, env)
    k = int(np.argmin(dist))
    report = AuditReport()
    dmin = float(dist[k])
    report.add(Check("min_clearance", dmin, d0, 1e-9, max(d0 - dmin, 0.0), dmin > d0 - 1e-9))
    if not report.checks[-1].passed:
        piece, idx = divmod(k, samples_per_piece)
        report.checks[-1] = Check(f"min_clearance (piece {piece}, s={s[idx]:.6f}, at {pts[k].tolist()})",
                                  dmin, d0, 1e-9, d0 - dmin, False)
    speed = float(np.linalg.norm(np.concatenate(vel), axis=1).max())
    accel = float(np.linalg.norm(np.concatenate(acc), axis=1).max())
    if v_max is not None:
        report.add(Check("max_speed", speed, v_max, 0.0, max(speed - v_max, 0.0), speed <= v_max))
    if a_max is not None:
        report.add(Check("max_acceleration", accel, a_max, 0.0, max(accel - a_max, 0.0), accel <= a_max))
    return report


def passage_classify(W, maps, divider_y: float, gaps: dict, samples_per_piece: int = 1024) -> str:
    """Label of the gap through which the curve crosses the plane ``y = divider_y``.

    Returns ``"none"`` without a crossing and ``"ambiguous"`` when the
    crossings pass through different gaps or outside every gap.
    """
    W = np.asarray(W, dtype=float)
    s = np.linspace(0.0, 1.0, samples_per_piece)
    pts = np.concatenate([bernstein_eval(A @ W, s) for A in np.asarray(maps)])
    y = pts[:, 1] - divider_y
    labels = set()
    for i in np.flatnonzero(np.sign(y[:-1]) * np.sign(y[1:]) < 0):
        t = y[i] / (y[i] - y[i + 1])
        x = pts[i, 0] + t * (pts[i + 1, 0] - pts[i, 0])
        hit = [name for name, (lo, hi) in gaps.items() if lo <= x <= hi]
        labels.add(hit[0] if len(hit) == 1 else "?")
    if not labels:
        return "none"
    if len(labels) > 1 or "?" in labels:
        return "ambiguous"
    return labels.pop()
