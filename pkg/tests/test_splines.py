import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from subdiv_traj.geometry import gjk_distance
from subdiv_traj.splines import (
    BezierPiece,
    CompositeTrajectory,
    SubdivisionHistory,
    build_composite,
    continuity_maps,
    control_polygon_length,
    de_casteljau,
    derivative_controls,
    derivative_matrix,
    evaluate,
    hull_diameter,
    jerk_free_count,
    split_matrices,
    subdivide,
)
from subdiv_traj.verify import adaptive_quadrature, bernstein_eval

coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def piece_strategy(min_deg=1, max_deg=9, dim=3):
    return st.integers(min_deg, max_deg).flatmap(
        lambda m: arrays(np.float64, (m + 1, dim), elements=coords))


PARABOLA = [[0.0, 0.0], [1.0, 2.0], [2.0, 0.0]]


# ---- continuity maps --------------------------------------------------------

def test_single_piece_map_is_identity():
    A = continuity_maps(1, 5, 2)
    assert A.shape == (1, 6, 6)
    np.testing.assert_array_equal(A[0], np.eye(6))


@pytest.mark.parametrize("N,M,k,expected", [(2, 3, 0, 7), (2, 8, 2, 15), (1, 8, 2, 9), (4, 8, 2, 27)])
def test_free_counts(N, M, k, expected):
    assert continuity_maps(N, M, k).shape[2] == expected
    assert jerk_free_count(N, M, k) == expected


def test_free_count_matches_constraint_rank():
    # independent count: null-space dimension of the junction equations
    N, M, k = 2, 8, 2
    rows = []
    for j in range(k + 1):
        D = derivative_matrix(M, j) if j else np.eye(M + 1)
        rows.append(np.r_[D[-1], -D[0]])
    C = np.array(rows)
    assert 2 * (M + 1) - np.linalg.matrix_rank(C) == 15


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2), st.integers(0, 2**31 - 1))
def test_composite_continuity_after_perturbation(N, k, seed):
    rng = np.random.default_rng(seed)
    A = continuity_maps(N, 8, k)
    W = rng.normal(size=(A.shape[2], 3))
    traj = CompositeTrajectory(W, float(N), A, k)
    for i in range(N - 1):
        for order in range(k + 1):
            a = bernstein_eval(traj.controls(i), np.array([1.0]), order)
            b = bernstein_eval(traj.controls(i + 1), np.array([0.0]), order)
            np.testing.assert_allclose(a, b, atol=1e-9 * max(1.0, np.abs(a).max()))


# ---- evaluation ---------------------------------------------------------------

def test_evaluate_examples():
    np.testing.assert_allclose(evaluate(BezierPiece([[0, 0, 0], [1, 0, 0]]), 0.5), [0.5, 0, 0])
    np.testing.assert_allclose(evaluate(BezierPiece(PARABOLA), 0.5), [1.0, 1.0])


@given(piece_strategy())
def test_endpoint_interpolation(P):
    piece = BezierPiece(P)
    np.testing.assert_allclose(evaluate(piece, 0.0), P[0], atol=1e-12)
    np.testing.assert_allclose(evaluate(piece, 1.0), P[-1], atol=1e-12)


@given(piece_strategy(), st.floats(0, 1))
def test_de_casteljau_matches_bernstein_oracle(P, s):
    a = de_casteljau(P, np.array([s]))
    b = bernstein_eval(P, np.array([s]))
    np.testing.assert_allclose(a, b, atol=1e-9 * max(1.0, np.abs(P).max()))


def test_evaluate_rejects_out_of_range():
    with pytest.raises(ValueError):
        evaluate(BezierPiece(PARABOLA), 1.5)


# ---- subdivision ---------------------------------------------------------------

def test_subdivide_examples():
    left, right = subdivide(BezierPiece([[0, 0, 0], [1, 0, 0]]))
    np.testing.assert_allclose(left.control_points, [[0, 0, 0], [0.5, 0, 0]])
    np.testing.assert_allclose(right.control_points, [[0.5, 0, 0], [1, 0, 0]])
    left, right = subdivide(BezierPiece(PARABOLA))
    np.testing.assert_allclose(left.control_points, [[0, 0], [0.5, 1], [1, 1]])
    np.testing.assert_allclose(right.control_points, [[1, 1], [1.5, 1], [2, 0]])


@settings(max_examples=50)
@given(piece_strategy(2, 9))
def test_subdivision_exact(P):
    piece = BezierPiece(P)
    left, right = subdivide(piece)
    s = np.linspace(0, 1, 21)
    scale = max(1.0, np.abs(P).max())
    assert np.abs(bernstein_eval(left.control_points, s) - bernstein_eval(P, s / 2)).max() < 1e-12 * scale * 10
    assert np.abs(bernstein_eval(right.control_points, s) - bernstein_eval(P, 0.5 + s / 2)).max() < 1e-12 * scale * 10
    np.testing.assert_allclose(evaluate(piece, 0.25), evaluate(left, 0.5), atol=1e-12 * scale)


@given(piece_strategy(1, 9))
def test_split_polygon_not_longer(P):
    left, right = subdivide(BezierPiece(P))
    assert control_polygon_length(left) + control_polygon_length(right) <= control_polygon_length(P) * (1 + 1e-12) + 1e-12


def test_split_matrices_rows_sum_to_one():
    D1, D2 = split_matrices(8)
    np.testing.assert_allclose(D1.sum(axis=1), 1.0)
    np.testing.assert_allclose(D2.sum(axis=1), 1.0)


# ---- derivatives ----------------------------------------------------------------

def test_derivative_examples():
    np.testing.assert_allclose(derivative_controls(BezierPiece(PARABOLA), 1).control_points, [[2, 4], [2, -4]])
    np.testing.assert_allclose(derivative_controls(BezierPiece([[0], [0], [0], [1]]), 2).control_points, [[0], [6]])
    np.testing.assert_allclose(derivative_controls(BezierPiece(np.ones((5, 3))), 2).control_points, 0.0)


@settings(max_examples=30)
@given(piece_strategy(2, 9), st.floats(0.05, 0.95))
def test_derivative_matches_central_difference(P, s):
    d = bernstein_eval(derivative_matrix(P.shape[0] - 1, 1) @ P, np.array([s]))[0]
    h = 1e-5
    fd = (bernstein_eval(P, np.array([s + h])) - bernstein_eval(P, np.array([s - h])))[0] / (2 * h)
    assert np.abs(d - fd).max() <= 1e-6 * max(1.0, np.abs(d).max())


# ---- hull measures ---------------------------------------------------------------

def test_hull_measures():
    assert hull_diameter([[1, 1, 1], [1, 1, 1]]) == 0.0
    assert hull_diameter([[0, 0, 0], [3, 4, 0]]) == pytest.approx(5.0)
    # the endpoint chord is 2, but the apex pairs are longer: |(1,2) - (0,0)| = sqrt(5)
    assert hull_diameter(PARABOLA) == pytest.approx(np.sqrt(5))
    assert control_polygon_length(PARABOLA) == pytest.approx(2 * np.sqrt(5))
    line = np.linspace([0, 0, 0], [1, 2, 2], 6)
    assert control_polygon_length(line) == pytest.approx(3.0)


@settings(max_examples=40, deadline=None)
@given(piece_strategy(2, 8))
def test_convex_hull_containment(P):
    for s in (0.0, 0.13, 0.5, 0.77, 1.0):
        q = de_casteljau(P, np.array([s]))
        assert gjk_distance(q, P) < 1e-9 * max(1.0, np.abs(P).max())


@settings(max_examples=20, deadline=None)
@given(piece_strategy(2, 6))
def test_arc_length_sandwich(P):
    arc = adaptive_quadrature(lambda u: np.linalg.norm(bernstein_eval(P, u, 1), axis=1), 0, 1, 1e-10).value
    tol = 1e-8 * max(1.0, np.abs(P).max())
    assert np.linalg.norm(P[-1] - P[0]) <= arc + tol
    assert arc <= control_polygon_length(P) + tol


# ---- composite and history ---------------------------------------------------------

def test_build_from_waypoints_is_straight():
    wp = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]])
    traj = build_composite(wp, None, 8, 2, 2.0)
    assert traj.n_pieces == 2 and traj.degree == 8
    pts = traj.sample(np.linspace(0, 2, 50))
    np.testing.assert_allclose(pts[:, 1:], 0.0, atol=1e-12)
    np.testing.assert_allclose(traj.sample([0.0, 2.0]), wp[[0, 2]], atol=1e-12)


def test_fixed_rows_hold_endpoints():
    traj = build_composite(np.array([[0, 0, 0], [1, 1, 0], [2, 0, 0.0]]), None, 8, 2)
    rows = traj.fixed_rows()
    np.testing.assert_allclose(traj.W[rows], [[0, 0, 0], [2, 0, 0]], atol=1e-12)


def test_history_partition_and_reconstruct():
    traj = build_composite(np.array([[0, 0, 0], [1, 1, 0], [2, 0, 0.0]]), None, 8, 2)
    h = SubdivisionHistory.initial(traj).split([0]).split([0, 2])
    for piece in range(2):
        ivs = sorted((e.lo, e.hi) for e in h if e.piece == piece)
        assert ivs[0][0] == 0.0 and ivs[-1][1] == 1.0
        assert all(a[1] == b[0] for a, b in zip(ivs, ivs[1:]))
    assert h.widths().sum() == pytest.approx(2.0)
    for e in h:
        np.testing.assert_allclose(h.reconstruct(traj.maps, e), e.A, atol=1e-13)
    ctrl = h.controls(traj.W)
    e = h[0]
    s = np.linspace(0, 1, 7)
    expected = bernstein_eval(traj.controls(e.piece), e.lo + (e.hi - e.lo) * s)
    np.testing.assert_allclose(bernstein_eval(ctrl[0], s), expected, atol=1e-12)


def test_uniform_history_size():
    traj = build_composite(np.array([[0, 0, 0], [1, 0, 0.0]]), None, 8, 2)
    assert len(SubdivisionHistory.uniform(traj, 3)) == 8


def test_stacked_maps_read_only():
    traj = build_composite(np.array([[0, 0, 0], [1, 0, 0.0]]), None, 8, 2)
    with pytest.raises(ValueError):
        SubdivisionHistory.initial(traj).stacked_maps()[0, 0, 0] = 1.0
