import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from subdiv_traj import solver as S
from subdiv_traj.barriers import jerk_energy
from subdiv_traj.config import SolverConfig
from subdiv_traj.geometry import Environment, build_bvh, gjk_distance
from subdiv_traj.scenes import quad_mesh
from subdiv_traj.splines import SubdivisionHistory, build_composite
from subdiv_traj.solver import (
    InfeasibleStartError,
    IterateState,
    inexact_p_ipm,
    need_sub,
    p_ipm,
    search_exact,
    search_inexact,
    spd_project,
    subdivide_unsafe,
    traj_sub,
)
from subdiv_traj.verify import dense_feasibility_audit

CFG = SolverConfig()


def _env_bvh(env, cfg=CFG):
    return env, build_bvh(env, cfg.cutoff)


def _wall():
    # zero-thickness wall in the plane y = 0
    return Environment.from_mesh(*quad_mesh([-1, 0, -1], [4, 0, 0], [0, 0, 2]))


def _context(traj, env, bvh, mode, cfg=CFG):
    return S._Context(env, bvh, cfg, traj.maps, mode, S._free_mask(traj))


def _state(traj, ctx, history=None):
    history = SubdivisionHistory.initial(traj) if history is None else history
    ev = ctx.evaluate(traj.W, traj.T, history, SubdivisionHistory.initial(traj), order=2)
    assert not ev.infeasible
    return IterateState(traj.W, traj.T, history, ev, 0, 0.0, SubdivisionHistory.initial(traj))


def _through_wall_direction(traj):
    # translate every control by -1 in y and shorten T slightly for descent
    d = np.zeros(traj.W.size + 1)
    d[1:-1:3] = -1.0
    d[-1] = -0.1
    return d


# ---- spd_project -----------------------------------------------------------------

def test_spd_project_examples():
    np.testing.assert_allclose(spd_project(np.diag([2.0, 3.0]), 1e-8), np.diag([2.0, 3.0]))
    np.testing.assert_allclose(spd_project(np.diag([2.0, -1.0]), 1e-8), np.diag([2.0, 1e-8]), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-5, 5)))
def test_spd_project_rank_matches_clamp_count(A):
    H = A + A.T
    floor = 1e-3
    lam = np.linalg.eigvalsh(H)
    # eigenvalues too close to the floor make the rank ill-defined
    if np.min(np.abs(lam - floor)) < 1e-6:
        return
    P = spd_project(H, floor)
    assert np.linalg.eigvalsh(P).min() >= floor * (1 - 1e-9) - 1e-12
    np.testing.assert_array_equal(P, P.T)
    expected = int(np.sum(lam < floor))
    assert np.linalg.matrix_rank(P - H, tol=1e-7) == expected


# ---- subdivision ----------------------------------------------------------------

def test_need_sub_examples():
    env, bvh = _env_bvh(Environment.from_points([[0, 10, 0]]))
    far = np.linspace([0, 0, 0], [1, 0, 0], 9)
    assert not need_sub(far, env, bvh, CFG)
    env, bvh = _env_bvh(Environment.from_points([[0, 0.15, 0]]))
    tiny = np.linspace([0, 0, 0], [0.05, 0, 0], 9)
    assert not need_sub(tiny, env, bvh, CFG)
    assert need_sub(far, env, bvh, CFG)


def test_traj_sub_far_unchanged():
    traj = build_composite(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), None, 8, 2)
    env, bvh = _env_bvh(Environment.from_points([[0, 10, 0]]))
    h0 = SubdivisionHistory.initial(traj)
    h1, mesh = traj_sub(traj.W, h0, env, bvh, CFG)
    assert h1 is h0
    assert mesh.points.shape == (18, 3) and len(mesh.edges) == 2 * 36 and len(mesh.triangles) == 2 * 84


def test_traj_sub_near_end_refines_twice():
    # diagonal piece of diameter 4 eps: one end 0.15 above the wall, the other far
    L = 4 * CFG.epsilon / np.sqrt(2)
    traj = build_composite(np.array([[0, 0.15, 0], [L, 0.15 + L, 0]]), None, 8, 2)
    env, bvh = _env_bvh(_wall())
    h, _ = traj_sub(traj.W, SubdivisionHistory.initial(traj), env, bvh, CFG)
    ivs = sorted((e.lo, e.hi) for e in h)
    assert ivs == [(0.0, 0.25), (0.25, 0.5), (0.5, 1.0)]


def test_psi_value():
    assert CFG.psi(0.25) == pytest.approx(6.5975e-4, rel=1e-4)
    assert CFG.psi(0.25) == pytest.approx(1e-3 * 0.25**0.3, rel=1e-15)


def test_subdivide_unsafe_midpoint():
    traj = build_composite(np.array([[0, 0.5, 0], [2, 0.5, 0.0]]), None, 8, 2)
    env, bvh = _env_bvh(_wall())
    h0 = SubdivisionHistory.initial(traj)
    assert subdivide_unsafe(h0, traj.W, traj.W, env, bvh, CFG) is h0
    W1 = traj.W - [0, 1, 0]
    h1 = subdivide_unsafe(h0, traj.W, W1, env, bvh, CFG)
    assert [(e.lo, e.hi) for e in h1] == [(0.0, 0.5), (0.5, 1.0)]


# ---- line searches --------------------------------------------------------------

def test_search_exact_rejects_zero_direction():
    traj = build_composite(np.array([[0, 0.5, 0], [2, 0.5, 0.0]]), None, 8, 2, 10.0)
    env, bvh = _env_bvh(_wall())
    ctx = _context(traj, env, bvh, "exact")
    with pytest.raises(ValueError):
        search_exact(_state(traj, ctx), np.zeros(traj.W.size + 1), ctx)


def test_search_exact_rejects_jump_through_thin_wall():
    traj = build_composite(np.array([[0, 0.5, 0], [2, 0.5, 0.0]]), None, 8, 2, 10.0)
    env, bvh = _env_bvh(_wall())
    ctx = _context(traj, env, bvh, "exact")
    state = _state(traj, ctx)
    d = _through_wall_direction(traj)
    # the full step lands on the far side, feasible on its own
    W1, T1 = ctx.split(state.x + d)
    assert not ctx.evaluate(W1, T1, state.history, state.dyn_history, order=0).infeasible
    assert gjk_distance(np.array([[0.0, 0.0, 0.0]]), W1) > CFG.d0
    new = search_exact(state, d, ctx)
    assert new.alpha == 0.25
    assert np.all(new.W[:, 1] > 0)
    assert new.objective.value < state.objective.value


def test_search_inexact_far_matches_exact():
    traj = build_composite(np.array([[0, 5, 0], [2, 5.5, 0.0]]), None, 8, 2, 10.0)
    env, bvh = _env_bvh(_wall())
    d = np.zeros(traj.W.size + 1)
    d[-1] = -1.0
    a = search_exact(_state(traj, _context(traj, env, bvh, "exact")), d, _context(traj, env, bvh, "exact"))
    ctx = _context(traj, env, bvh, "inexact")
    b, eps = search_inexact(_state(traj, ctx), d, ctx, CFG.epsilon_alpha)
    assert a.alpha == b.alpha and eps == CFG.epsilon_alpha
    np.testing.assert_array_equal(a.W, b.W)


def test_search_inexact_subdivides_below_step_floor():
    traj = build_composite(np.array([[0, 0.5, 0], [2, 0.5, 0.0]]), None, 8, 2, 10.0)
    env, bvh = _env_bvh(_wall())
    ctx = _context(traj, env, bvh, "inexact")
    state = _state(traj, ctx)
    new, eps = search_inexact(state, _through_wall_direction(traj), ctx, 2.0)
    assert len(new.history) > len(state.history)
    k = round(np.log(eps / 2.0) / np.log(CFG.gamma))
    assert k >= 1 and eps == pytest.approx(2.0 * CFG.gamma**k, rel=1e-15)
    assert np.all(new.W[:, 1] > 0)


# ---- outer loops ----------------------------------------------------------------

def _bent_line():
    traj = build_composite(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), None, 8, 2, 4.0)
    rng = np.random.default_rng(0)
    W = traj.W.copy()
    free = np.setdiff1d(np.arange(W.shape[0]), traj.fixed_rows())
    W[free] += rng.normal(scale=0.05, size=(free.size, 3))
    return traj.with_state(W, traj.T)


def test_obstacle_free_zero_time_weight_reaches_zero_jerk():
    cfg = SolverConfig(rho=0.0, epsilon_g=1e-8)
    env = Environment.from_points([[0, 50, 0]])
    res = p_ipm(_bent_line(), env, cfg)
    assert res.converged
    t = res.trajectory
    assert abs(jerk_energy(t.W, t.T, t.maps, 0).value) < 1e-8
    # zero jerk with only positions pinned: one quadratic across both pieces
    ts = np.linspace(0, t.T, 201)
    pts = t.sample(ts)
    coef = np.polynomial.polynomial.polyfit(ts, pts, 2)
    fit = np.polynomial.polynomial.polyval(ts, coef).T
    assert np.abs(fit - pts).max() < 1e-6


def test_obstacle_free_straight_start_is_stationary():
    cfg = SolverConfig(rho=0.0)
    traj = build_composite(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), None, 8, 2, 4.0)
    res = p_ipm(traj, Environment.from_points([[0, 50, 0]]), cfg)
    assert res.converged and len(res.log) == 1
    np.testing.assert_array_equal(res.trajectory.W, traj.W)


def test_obstacle_free_exact_and_inexact_identical():
    env = Environment.from_points([[0, 50, 0]])
    a = p_ipm(_bent_line(), env)
    b = inexact_p_ipm(_bent_line(), env)
    assert a.converged and b.converged
    np.testing.assert_array_equal(a.trajectory.W, b.trajectory.W)
    assert a.trajectory.T == b.trajectory.T
    assert [r.objective for r in a.log] == [r.objective for r in b.log]


def test_exact_objective_monotone_and_feasible():
    env = Environment.from_mesh(*quad_mesh([0.5, -0.3, -1], [1, 0, 0], [0, 0, 2]))
    traj = build_composite(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), None, 8, 2, 4.0)
    res = p_ipm(traj, env)
    assert res.converged
    steps = [r for r in res.log if r.alpha > 0]
    assert steps and all(r.objective < r.objective_before for r in steps)
    same = [(a, b) for a, b in zip(steps, steps[1:]) if a.history_size == b.history_size]
    assert all(b.objective < a.objective for a, b in same)
    t = res.trajectory
    assert dense_feasibility_audit(t.W, t.T, t.maps, env, CFG.d0, 256, CFG.v_max, CFG.a_max).passed


def test_eps_alpha_never_increases(monkeypatch):
    seen = []
    original = S.search_inexact

    def spy(state, d, ctx, eps_alpha):
        out = original(state, d, ctx, eps_alpha)
        seen.append((eps_alpha, out[1]))
        return out

    monkeypatch.setattr(S, "search_inexact", spy)
    env = Environment.from_mesh(*quad_mesh([0.5, -0.25, -1], [1, 0, 0], [0, 0, 2]))
    traj = build_composite(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), None, 8, 2, 4.0)
    res = inexact_p_ipm(traj, env)
    assert seen
    assert all(after <= before for before, after in seen)
    assert all(b[0] == a[1] for a, b in zip(seen, seen[1:]))
    assert res.eps_alpha <= CFG.epsilon_alpha


def test_infeasible_start_names_violation():
    traj = build_composite(np.array([[0, 0.5, 0], [2, -0.5, 0.0]]), None, 8, 2, 4.0)
    with pytest.raises(InfeasibleStartError, match="piece 0"):
        p_ipm(traj, _wall())


def test_max_iters_flag():
    env = Environment.from_points([[0, 50, 0]])
    res = p_ipm(_bent_line(), env, max_iters=1)
    assert res.status == "max_iters" and len(res.log) == 1
