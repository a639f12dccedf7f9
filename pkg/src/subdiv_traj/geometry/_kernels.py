"""Compiled inner loops: closest points, distance derivatives, GJK, BVH walks.

Conventions: the environment side of a pair is ``A`` (held fixed), the
trajectory-hull side is ``B`` (differentiated).  Closest points are
returned as barycentric weights on both simplices; a weight that is
exactly zero marks an inactive vertex.
"""
import math

import numpy as np
from numba import njit

KIND_POINT = 0
KIND_SEGMENT = 1
KIND_TRIANGLE = 2


# ---------------------------------------------------------------- helpers

@njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


# ---------------------------------------------------------- closest points

@njit(cache=True)
def closest_point_segment(p, a, b, beta):
    """Closest point of segment ``ab`` to ``p``; writes weights to ``beta``."""
    ab = b - a
    den = _dot(ab, ab)
    t = 0.0
    if den > 0.0:
        t = _clamp01(_dot(p - a, ab) / den)
    beta[0] = 1.0 - t
    beta[1] = t
    q = a + t * ab
    d = p - q
    return _dot(d, d)


@njit(cache=True)
def closest_point_triangle(p, a, b, c, beta):
    """Closest point of triangle ``abc`` to ``p`` (region-based).

    Near-degenerate triangles fall back to the nearest edge.
    """
    ab = b - a
    ac = c - a
    n = np.cross(ab, ac)
    nn = _dot(n, n)
    scale = max(_dot(ab, ab), _dot(ac, ac), _dot(c - b, c - b))
    if nn <= 1e-24 * scale * scale:
        tmp = np.zeros(2)
        best = closest_point_segment(p, a, b, tmp)
        beta[0] = tmp[0]
        beta[1] = tmp[1]
        beta[2] = 0.0
        d = closest_point_segment(p, b, c, tmp)
        if d < best:
            best = d
            beta[0] = 0.0
            beta[1] = tmp[0]
            beta[2] = tmp[1]
        d = closest_point_segment(p, a, c, tmp)
        if d < best:
            best = d
            beta[0] = tmp[0]
            beta[1] = 0.0
            beta[2] = tmp[1]
        return best
    ap = p - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    u = 1.0
    v = 0.0
    w = 0.0
    if d1 <= 0.0 and d2 <= 0.0:
        pass
    else:
        bp = p - b
        d3 = _dot(ab, bp)
        d4 = _dot(ac, bp)
        vc = d1 * d4 - d3 * d2
        cp = p - c
        d5 = _dot(ab, cp)
        d6 = _dot(ac, cp)
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4
        if d3 >= 0.0 and d4 <= d3:
            u, v, w = 0.0, 1.0, 0.0
        elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            v = d1 / (d1 - d3)
            u, w = 1.0 - v, 0.0
        elif d6 >= 0.0 and d5 <= d6:
            u, v, w = 0.0, 0.0, 1.0
        elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
            w = d2 / (d2 - d6)
            u, v = 1.0 - w, 0.0
        elif va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
            u, v = 0.0, 1.0 - w
        else:
            den = 1.0 / (va + vb + vc)
            v = vb * den
            w = vc * den
            u = 1.0 - v - w
    beta[0] = u
    beta[1] = v
    beta[2] = w
    q = u * a + v * b + w * c
    d = p - q
    return _dot(d, d)


@njit(cache=True)
def closest_segment_segment(p1, q1, p2, q2, alpha, beta):
    """Closest points between segments ``p1q1`` and ``p2q2``."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    tiny = 1e-30
    if a <= tiny and e <= tiny:
        s = 0.0
        t = 0.0
    elif a <= tiny:
        s = 0.0
        t = _clamp01(f / e)
    else:
        c = _dot(d1, r)
        if e <= tiny:
            t = 0.0
            s = _clamp01(-c / a)
        else:
            b = _dot(d1, d2)
            den = a * e - b * b
            s = 0.0
            if den > 0.0:
                s = _clamp01((b * f - c * e) / den)
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = _clamp01(-c / a)
            elif t > 1.0:
                t = 1.0
                s = _clamp01((b - c) / a)
    alpha[0] = 1.0 - s
    alpha[1] = s
    beta[0] = 1.0 - t
    beta[1] = t
    x = p1 + s * d1 - p2 - t * d2
    return _dot(x, x)


@njit(cache=True)
def segment_hits_triangle(p, q, a, b, c):
    """True if segment ``pq`` intersects triangle ``abc`` (non-degenerate)."""
    n = np.cross(b - a, c - a)
    dp = _dot(n, p - a)
    dq = _dot(n, q - a)
    if (dp > 0.0 and dq > 0.0) or (dp < 0.0 and dq < 0.0):
        return False
    if dp == dq:
        return False
    t = dp / (dp - dq)
    x = p + t * (q - p)
    c0 = _dot(np.cross(b - a, x - a), n)
    c1 = _dot(np.cross(c - b, x - b), n)
    c2 = _dot(np.cross(a - c, x - c), n)
    return (c0 >= 0.0 and c1 >= 0.0 and c2 >= 0.0) or (c0 <= 0.0 and c1 <= 0.0 and c2 <= 0.0)


@njit(cache=True)
def closest_triangle_segment(a, b, c, p, q, alpha, beta):
    """Closest points between triangle ``abc`` (alpha) and segment ``pq`` (beta)."""
    tri = np.empty((3, 3))
    tri[0] = a
    tri[1] = b
    tri[2] = c
    ta = np.zeros(3)
    t2 = np.zeros(2)
    s2 = np.zeros(2)
    best = np.inf
    if segment_hits_triangle(p, q, a, b, c):
        alpha[:] = 0.0
        beta[:] = 0.0
        return 0.0
    for k in range(3):
        i = k
        j = (k + 1) % 3
        d = closest_segment_segment(tri[i], tri[j], p, q, t2, s2)
        if d < best:
            best = d
            alpha[:] = 0.0
            alpha[i] = t2[0]
            alpha[j] += t2[1]
            beta[0] = s2[0]
            beta[1] = s2[1]
    d = closest_point_triangle(p, a, b, c, ta)
    if d < best:
        best = d
        alpha[:] = ta
        beta[0] = 1.0
        beta[1] = 0.0
    d = closest_point_triangle(q, a, b, c, ta)
    if d < best:
        best = d
        alpha[:] = ta
        beta[0] = 0.0
        beta[1] = 1.0
    return best


# -------------------------------------------------- squared-distance jets

@njit(cache=True)
def sqdist_jet(VA, alpha, na, VB, beta, nb, grad, hess):
    """Gradient and Hessian of the squared distance between two simplices.

    ``VA[:na]``, ``VB[:nb]`` hold the vertices, ``alpha``/``beta`` the
    barycentric weights of the closest points.  The active vertices span
    affine features on which the closest-point parameters are unconstrained,
    so the envelope theorem gives the gradient and implicit differentiation
    of the stationarity condition gives the Hessian.  Output vertex order is
    ``A`` then ``B``; ``grad`` is ``(na+nb, 3)``, ``hess`` ``(3(na+nb),)*2``.
    """
    nv = na + nb
    for i in range(nv):
        for k in range(3):
            grad[i, k] = 0.0
    for i in range(3 * nv):
        for j in range(3 * nv):
            hess[i, j] = 0.0
    act = np.empty(nv, dtype=np.int64)
    na_act = 0
    for i in range(na):
        if alpha[i] != 0.0:
            act[na_act] = i
            na_act += 1
    nb_act = 0
    for j in range(nb):
        if beta[j] != 0.0:
            act[na_act + nb_act] = na + j
            nb_act += 1
    n_act = na_act + nb_act
    m = (na_act - 1) + (nb_act - 1)
    V = np.empty((n_act, 3))
    c = np.empty(n_act)
    G = np.zeros((n_act, max(m, 1)))
    r = np.zeros(3)
    for q in range(n_act):
        idx = act[q]
        if idx < na:
            V[q] = VA[idx]
            c[q] = alpha[idx]
        else:
            V[q] = VB[idx - na]
            c[q] = -beta[idx - na]
        r += c[q] * V[q]
    # parameters: A-side t_1..t_{na_act-1}, then B-side u_1..u_{nb_act-1}
    for q in range(1, na_act):
        G[0, q - 1] = -1.0
        G[q, q - 1] = 1.0
    off = na_act - 1
    for q in range(1, nb_act):
        G[na_act, off + q - 1] = 1.0
        G[na_act + q, off + q - 1] = -1.0
    for q in range(n_act):
        for k in range(3):
            grad[act[q], k] = 2.0 * c[q] * r[k]
    if m == 0:
        for q in range(n_act):
            for s in range(n_act):
                cc = 2.0 * c[q] * c[s]
                for k in range(3):
                    hess[3 * act[q] + k, 3 * act[s] + k] = cc
        return
    E = np.zeros((3, m))
    for kk in range(m):
        for q in range(n_act):
            if G[q, kk] != 0.0:
                for k in range(3):
                    E[k, kk] += G[q, kk] * V[q, k]
    K = E.T @ E
    Kinv = np.linalg.inv(K)
    # T_l = -Kinv (G_l r^T + c_l E^T), one (m, 3) block per active vertex
    Tl = np.empty((n_act, m, 3))
    for s in range(n_act):
        rhs = np.empty((m, 3))
        for kk in range(m):
            for k in range(3):
                rhs[kk, k] = G[s, kk] * r[k] + c[s] * E[k, kk]
        Tl[s] = -(Kinv @ rhs)
    for q in range(n_act):
        for s in range(n_act):
            gt = np.zeros(3)
            for kk in range(m):
                for k in range(3):
                    gt[k] += G[q, kk] * Tl[s, kk, k]
            ET = E @ Tl[s]
            for a in range(3):
                for b in range(3):
                    val = r[a] * gt[b] + c[q] * ET[a, b]
                    if a == b:
                        val += c[q] * c[s]
                    hess[3 * act[q] + a, 3 * act[s] + b] = 2.0 * val
    # exact symmetry
    for i in range(3 * nv):
        for j in range(i + 1, 3 * nv):
            h = 0.5 * (hess[i, j] + hess[j, i])
            hess[i, j] = h
            hess[j, i] = h


@njit(cache=True)
def sq_to_dist(d2, grad, hess, nv):
    """Convert squared-distance jets to distance jets in place; returns d."""
    d = math.sqrt(d2)
    inv = 0.5 / d
    for i in range(3 * nv):
        for j in range(3 * nv):
            gi = grad[i // 3, i % 3]
            gj = grad[j // 3, j % 3]
            hess[i, j] = hess[i, j] * inv - gi * gj / (4.0 * d2 * d)
    for i in range(nv):
        for k in range(3):
            grad[i, k] *= inv
    return d


@njit(cache=True)
def pair_closest(kind_a, VA, kind_b, VB, alpha, beta):
    """Dispatch closest-point computation; kinds are simplex sizes minus one."""
    alpha[:] = 0.0
    beta[:] = 0.0
    if kind_a == KIND_POINT and kind_b == KIND_POINT:
        alpha[0] = 1.0
        beta[0] = 1.0
        d = VA[0] - VB[0]
        return _dot(d, d)
    if kind_a == KIND_POINT and kind_b == KIND_SEGMENT:
        alpha[0] = 1.0
        return closest_point_segment(VA[0], VB[0], VB[1], beta)
    if kind_a == KIND_SEGMENT and kind_b == KIND_POINT:
        beta[0] = 1.0
        return closest_point_segment(VB[0], VA[0], VA[1], alpha)
    if kind_a == KIND_POINT and kind_b == KIND_TRIANGLE:
        alpha[0] = 1.0
        return closest_point_triangle(VA[0], VB[0], VB[1], VB[2], beta)
    if kind_a == KIND_TRIANGLE and kind_b == KIND_POINT:
        beta[0] = 1.0
        return closest_point_triangle(VB[0], VA[0], VA[1], VA[2], alpha)
    if kind_a == KIND_SEGMENT and kind_b == KIND_SEGMENT:
        return closest_segment_segment(VA[0], VA[1], VB[0], VB[1], alpha, beta)
    if kind_a == KIND_TRIANGLE and kind_b == KIND_SEGMENT:
        return closest_triangle_segment(VA[0], VA[1], VA[2], VB[0], VB[1], alpha, beta)
    if kind_a == KIND_SEGMENT and kind_b == KIND_TRIANGLE:
        return closest_triangle_segment(VB[0], VB[1], VB[2], VA[0], VA[1], beta, alpha)
    return np.nan


# ------------------------------------------------------------ barriers

@njit(cache=True)
def clog_jet(x, x0):
    """Clamped log barrier and its first two derivatives (x > 0 assumed)."""
    if x >= x0:
        return 0.0, 0.0, 0.0
    L = math.log(x / x0)
    g = (x - x0) * (x - x0)
    g1 = 2.0 * (x - x0)
    h = L / x
    h1 = (1.0 - L) / (x * x)
    h2 = (2.0 * L - 3.0) / (x * x * x)
    f = -g * h
    f1 = -(g1 * h + g * h1)
    f2 = -(2.0 * h + 2.0 * g1 * h1 + g * h2)
    return f, f1, f2


@njit(cache=True)
def mollifier_jet(u, v, ratio, grad_u, hess_u):
    """Parallel-edge mollifier on hull edge vector ``u`` against fixed ``v``.

    With ``s = |u x v|^2 / (ratio |u|^2 |v|^2)`` the factor is ``s(2-s)``
    below ``s = 1`` and one above.  Returns the factor; writes its gradient
    and Hessian with respect to ``u``.
    """
    for i in range(3):
        grad_u[i] = 0.0
        for j in range(3):
            hess_u[i, j] = 0.0
    bu = _dot(u, u)
    kv = _dot(v, v)
    if bu <= 0.0 or kv <= 0.0:
        return 0.0
    a = _dot(u, v)
    q = a * a / (bu * kv)
    s = (1.0 - q) / ratio
    if s >= 1.0:
        return 1.0
    m = s * (2.0 - s)
    m1 = 2.0 - 2.0 * s
    # derivatives of q = a^2 / (b k), a = u.v, b = u.u
    gq = np.empty(3)
    for i in range(3):
        gq[i] = 2.0 * a * v[i] / (bu * kv) - 2.0 * a * a * u[i] / (bu * bu * kv)
    Hq = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            val = (2.0 * v[i] * v[j] / (bu * kv)
                   - 4.0 * a * (v[i] * u[j] + u[i] * v[j]) / (bu * bu * kv)
                   + 8.0 * a * a * u[i] * u[j] / (bu * bu * bu * kv))
            if i == j:
                val -= 2.0 * a * a / (bu * bu * kv)
            Hq[i, j] = val
    for i in range(3):
        gs_i = -gq[i] / ratio
        grad_u[i] = m1 * gs_i
        for j in range(3):
            gs_j = -gq[j] / ratio
            hess_u[i, j] = -2.0 * gs_i * gs_j + m1 * (-Hq[i, j] / ratio)
    return m


@njit(cache=True)
def assemble_collision(ctrl, weights, mode, cand_ptr, cand_idx,
                       prim_kind, prim_ref, prim_cover, env_pts, env_segs, env_tris,
                       hedges, htris, d0, x0, moll_ratio, order):
    """Collision barrier summed over history entries.

    ``mode`` 0 sums hull primitive pairs (edge-edge, env point vs hull
    triangle, env triangle vs hull vertex); mode 1 sums the first/last
    control-point chord against every covering environment primitive,
    weighted per entry.  Returns value, per-entry control-point gradient and
    Hessian, active pair count and the first violating ``(entry, prim)``
    (``-1`` when feasible).
    """
    E = ctrl.shape[0]
    n = ctrl.shape[1]
    grad = np.zeros((E, n, 3))
    hess = np.zeros((E, 3 * n, 3 * n))
    value = 0.0
    active = 0
    VA = np.zeros((3, 3))
    VB = np.zeros((3, 3))
    alpha = np.zeros(3)
    beta = np.zeros(3)
    gj = np.zeros((6, 3))
    hj = np.zeros((18, 18))
    loc = np.zeros(3, dtype=np.int64)
    gm = np.zeros(3)
    hm = np.zeros((3, 3))
    cutoff = d0 + x0
    for e in range(E):
        w = ctrl[e]
        wt = weights[e]
        for ci in range(cand_ptr[e], cand_ptr[e + 1]):
            pid = cand_idx[ci]
            kind = prim_kind[pid]
            ref = prim_ref[pid]
            if mode == 1 and not prim_cover[pid]:
                continue
            na = kind + 1
            if kind == KIND_POINT:
                VA[0] = env_pts[ref]
            elif kind == KIND_SEGMENT:
                VA[0] = env_pts[env_segs[ref, 0]]
                VA[1] = env_pts[env_segs[ref, 1]]
            else:
                VA[0] = env_pts[env_tris[ref, 0]]
                VA[1] = env_pts[env_tris[ref, 1]]
                VA[2] = env_pts[env_tris[ref, 2]]
            # enumerate hull sub-primitives paired with this env primitive
            if mode == 1:
                nsub = 1
                kb = KIND_SEGMENT
            elif kind == KIND_SEGMENT:
                nsub = hedges.shape[0]
                kb = KIND_SEGMENT
            elif kind == KIND_POINT:
                if htris.shape[0] > 0:
                    nsub = htris.shape[0]
                    kb = KIND_TRIANGLE
                else:
                    nsub = hedges.shape[0]
                    kb = KIND_SEGMENT
            else:
                nsub = n
                kb = KIND_POINT
            for sub in range(nsub):
                if mode == 1:
                    loc[0] = 0
                    loc[1] = n - 1
                elif kb == KIND_SEGMENT:
                    loc[0] = hedges[sub, 0]
                    loc[1] = hedges[sub, 1]
                elif kb == KIND_TRIANGLE:
                    loc[0] = htris[sub, 0]
                    loc[1] = htris[sub, 1]
                    loc[2] = htris[sub, 2]
                else:
                    loc[0] = sub
                nb = kb + 1
                for q in range(nb):
                    VB[q] = w[loc[q]]
                d2 = pair_closest(kind, VA, kb, VB, alpha, beta)
                if d2 >= cutoff * cutoff:
                    continue
                dist = math.sqrt(d2)
                if dist <= d0:
                    return np.inf, grad, hess, active, e, pid
                f, f1, f2 = clog_jet(dist - d0, x0)
                if f == 0.0 and f1 == 0.0 and f2 == 0.0:
                    continue
                moll = 1.0
                use_moll = kind == KIND_SEGMENT and kb == KIND_SEGMENT
                if use_moll:
                    moll = mollifier_jet(VB[1] - VB[0], VA[1] - VA[0], moll_ratio, gm, hm)
                    if moll == 0.0:
                        continue
                active += 1
                value += wt * moll * f
                if order == 0:
                    continue
                nv = na + nb
                sqdist_jet(VA, alpha, na, VB, beta, nb, gj, hj)
                sq_to_dist(d2, gj, hj, nv)
                # barrier term b = moll * clog(dist - d0) restricted to B vertices
                for q in range(nb):
                    for k in range(3):
                        gval = moll * f1 * gj[na + q, k]
                        if use_moll:
                            sgn = 1.0 if q == 1 else -1.0
                            gval += f * sgn * gm[k]
                        grad[e, loc[q], k] += wt * gval
                if order < 2:
                    continue
                for q in range(nb):
                    for k in range(3):
                        gi = gj[na + q, k]
                        I = 3 * loc[q] + k
                        for s in range(nb):
                            for l in range(3):
                                gl = gj[na + s, l]
                                hv = moll * (f2 * gi * gl + f1 * hj[3 * (na + q) + k, 3 * (na + s) + l])
                                if use_moll:
                                    sq = 1.0 if q == 1 else -1.0
                                    ss = 1.0 if s == 1 else -1.0
                                    hv += f1 * (gi * ss * gm[l] + sq * gm[k] * gl)
                                    hv += f * sq * ss * hm[k, l]
                                hess[e, I, 3 * loc[s] + l] += wt * hv
    return value, grad, hess, active, -1, -1


# ------------------------------------------------------------------ GJK

@njit(cache=True)
def _support(X, n, d):
    best = 0
    bv = X[0, 0] * d[0] + X[0, 1] * d[1] + X[0, 2] * d[2]
    for i in range(1, n):
        v = X[i, 0] * d[0] + X[i, 1] * d[1] + X[i, 2] * d[2]
        if v > bv:
            bv = v
            best = i
    return best


@njit(cache=True)
def _closest_on_simplex(S, n, v):
    """Min-norm point of conv(S[:n]); shrinks S to the supporting subset."""
    best = np.inf
    best_mask = 0
    best_lam = np.zeros(4)
    lam = np.zeros(4)
    idx = np.empty(4, dtype=np.int64)
    for mask in range(1, 1 << n):
        p = 0
        for i in range(n):
            if mask & (1 << i):
                idx[p] = i
                p += 1
        y0 = S[idx[0]]
        if p == 1:
            lam[0] = 1.0
            x = y0.copy()
        else:
            k = p - 1
            Gm = np.empty((k, k))
            rhs = np.empty(k)
            for i in range(k):
                di = S[idx[i + 1]] - y0
                rhs[i] = -_dot(di, y0)
                for j in range(k):
                    Gm[i, j] = _dot(di, S[idx[j + 1]] - y0)
            det = np.linalg.det(Gm)
            scale = 1.0
            for i in range(k):
                scale *= Gm[i, i]
            if not abs(det) > 1e-13 * scale or scale == 0.0:
                continue
            sol = np.linalg.solve(Gm, rhs)
            ok = True
            tot = 0.0
            for i in range(k):
                if sol[i] < 0.0:
                    ok = False
                tot += sol[i]
            if not ok or tot > 1.0:
                continue
            lam[0] = 1.0 - tot
            for i in range(k):
                lam[i + 1] = sol[i]
            x = y0.copy()
            for i in range(k):
                x += sol[i] * (S[idx[i + 1]] - y0)
        nn = _dot(x, x)
        if nn < best:
            best = nn
            best_mask = mask
            for i in range(p):
                best_lam[i] = lam[i]
            v[0] = x[0]
            v[1] = x[1]
            v[2] = x[2]
    p = 0
    for i in range(n):
        if best_mask & (1 << i):
            S[p] = S[i]
            p += 1
    return p


@njit(cache=True)
def gjk_distance(X, nx, Y, ny, tol):
    """Distance between conv(X[:nx]) and conv(Y[:ny])."""
    S = np.empty((4, 3))
    v = X[0] - Y[0]
    S[0] = v
    ns = 1
    dv = np.empty(3)
    for it in range(128):
        vv = _dot(v, v)
        if vv <= 1e-300:
            return 0.0
        vn = math.sqrt(vv)
        for k in range(3):
            dv[k] = -v[k]
        w = X[_support(X, nx, dv)] - Y[_support(Y, ny, v)]
        vw = _dot(v, w)
        if vn - vw / vn <= tol or vv - vw <= 1e-15 * vv:
            return vn
        for i in range(ns):
            if S[i, 0] == w[0] and S[i, 1] == w[1] and S[i, 2] == w[2]:
                return vn
        S[ns] = w
        ns += 1
        vnew = np.empty(3)
        ns = _closest_on_simplex(S, ns, vnew)
        if ns == 4:
            return 0.0
        if _dot(vnew, vnew) >= vv:
            return vn
        v = vnew
    return math.sqrt(_dot(v, v))


# ------------------------------------------------------------------ BVH

@njit(cache=True)
def _box_gap(alo, ahi, blo, bhi):
    s = 0.0
    for k in range(3):
        g = max(blo[k] - ahi[k], alo[k] - bhi[k], 0.0)
        s += g * g
    return math.sqrt(s)


@njit(cache=True)
def bvh_query(qlo, qhi, grow, node_lo, node_hi, node_left, node_right,
              node_start, node_count, order, prim_lo, prim_hi):
    """Candidate primitives whose (inflated) boxes overlap each query box.

    Query boxes are expanded by ``grow`` first.  Returns CSR arrays.
    """
    Q = qlo.shape[0]
    ptr = np.zeros(Q + 1, dtype=np.int64)
    cap = 64
    out = np.empty(cap, dtype=np.int64)
    cnt = 0
    stack = np.empty(128, dtype=np.int64)
    lo = np.empty(3)
    hi = np.empty(3)
    for qi in range(Q):
        for k in range(3):
            lo[k] = qlo[qi, k] - grow
            hi[k] = qhi[qi, k] + grow
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            nd = stack[sp]
            hit = True
            for k in range(3):
                if node_lo[nd, k] > hi[k] or node_hi[nd, k] < lo[k]:
                    hit = False
            if not hit:
                continue
            if node_left[nd] < 0:
                for t in range(node_start[nd], node_start[nd] + node_count[nd]):
                    pid = order[t]
                    ok = True
                    for k in range(3):
                        if prim_lo[pid, k] > hi[k] or prim_hi[pid, k] < lo[k]:
                            ok = False
                    if ok:
                        if cnt == cap:
                            cap *= 2
                            tmp = np.empty(cap, dtype=np.int64)
                            tmp[:cnt] = out[:cnt]
                            out = tmp
                        out[cnt] = pid
                        cnt += 1
            else:
                stack[sp] = node_left[nd]
                stack[sp + 1] = node_right[nd]
                sp += 2
        ptr[qi + 1] = cnt
    return ptr, out[:cnt].copy()


@njit(cache=True)
def hull_env_min(X, nx, stop_below, upper, node_lo, node_hi, node_left, node_right,
                 node_start, node_count, order, prim_lo, prim_hi, prim_cover,
                 prim_verts, prim_nv, tol):
    """Branch-and-bound nearest distance from conv(X) to covering primitives.

    Exact whenever the result is below ``upper``; returns early as soon as
    a distance ``<= stop_below`` is found.  Also returns the primitive id.
    """
    lo = np.empty(3)
    hi = np.empty(3)
    for k in range(3):
        lo[k] = X[0, k]
        hi[k] = X[0, k]
    for i in range(1, nx):
        for k in range(3):
            lo[k] = min(lo[k], X[i, k])
            hi[k] = max(hi[k], X[i, k])
    best = upper
    best_id = -1
    stack = np.empty(128, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        nd = stack[sp]
        if _box_gap(lo, hi, node_lo[nd], node_hi[nd]) >= best:
            continue
        if node_left[nd] < 0:
            for t in range(node_start[nd], node_start[nd] + node_count[nd]):
                pid = order[t]
                if not prim_cover[pid]:
                    continue
                if _box_gap(lo, hi, prim_lo[pid], prim_hi[pid]) >= best:
                    continue
                d = gjk_distance(X, nx, prim_verts[pid], prim_nv[pid], tol)
                if d < best:
                    best = d
                    best_id = pid
                    if best <= stop_below:
                        return best, best_id
        else:
            a = node_left[nd]
            b = node_right[nd]
            ga = _box_gap(lo, hi, node_lo[a], node_hi[a])
            gb = _box_gap(lo, hi, node_lo[b], node_hi[b])
            if ga <= gb:
                stack[sp] = b
                stack[sp + 1] = a
            else:
                stack[sp] = a
                stack[sp + 1] = b
            sp += 2
    return best, best_id


@njit(cache=True)
def batch_hull_env_min(P, nps, stop_below, upper, node_lo, node_hi, node_left, node_right,
                       node_start, node_count, order, prim_lo, prim_hi, prim_cover,
                       prim_verts, prim_nv, tol):
    """``hull_env_min`` for a batch of point sets ``P[i, :nps[i]]``."""
    Q = P.shape[0]
    out = np.empty(Q)
    ids = np.empty(Q, dtype=np.int64)
    for i in range(Q):
        d, pid = hull_env_min(P[i], nps[i], stop_below[i], upper[i], node_lo, node_hi,
                              node_left, node_right, node_start, node_count, order,
                              prim_lo, prim_hi, prim_cover, prim_verts, prim_nv, tol)
        out[i] = d
        ids[i] = pid
    return out, ids
