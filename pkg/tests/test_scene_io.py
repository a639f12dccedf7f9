import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from subdiv_traj.barriers import jerk_energy
from subdiv_traj.config import SolverConfig
from subdiv_traj.geometry import Environment
from subdiv_traj.scene_io import (
    SAMPLE_COLUMNS,
    LiftError,
    SceneError,
    TrajectorySpec,
    load_config,
    load_environment,
    load_trajectory_spec,
    lift_waypoints,
    read_iterations,
    read_samples,
    read_trajectory,
    sample_trajectory,
    write_iterations,
    write_samples,
    write_trajectory,
)
from subdiv_traj.scenes import box_mesh, quad_mesh
from subdiv_traj.solver import IterationRecord
from subdiv_traj.splines import CompositeTrajectory, build_composite, continuity_maps

CFG = SolverConfig()


def _counts(env):
    return env.points.shape[0], env.segments.shape[0], env.triangles.shape[0]


def _cube_obj():
    V, F = box_mesh([0, 0, 0], [1, 1, 1])
    return "".join(f"v {x} {y} {z}\n" for x, y, z in V) + "".join(f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in F)


# ---- loaders ------------------------------------------------------------------

def test_obj_single_triangle(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("# one face\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n")
    assert _counts(load_environment(p)) == (3, 3, 1)


def test_obj_cube_edges(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(_cube_obj())
    V, E, F = _counts(load_environment(p))
    assert (V, E, F) == (8, 18, 12)
    assert V - E + F == 2


def test_obj_quad_fan_and_negative_indices(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n")
    assert _counts(load_environment(p)) == (4, 5, 2)


def test_xyz_cloud(tmp_path):
    rng = np.random.default_rng(0)
    p = tmp_path / "cloud.xyz"
    np.savetxt(p, rng.normal(size=(100, 3)))
    assert _counts(load_environment(p)) == (100, 0, 0)


def test_ply_cloud_and_mesh(tmp_path):
    head = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
    cloud = tmp_path / "c.ply"
    cloud.write_text(head + "end_header\n0 0 0\n1 0 0\n0 1 0\n")
    assert _counts(load_environment(cloud)) == (3, 0, 0)
    mesh = tmp_path / "m.ply"
    mesh.write_text(head + "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
                    "0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    assert _counts(load_environment(mesh)) == (3, 3, 1)


def test_binary_ply_rejected(tmp_path):
    p = tmp_path / "b.ply"
    p.write_text("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(SceneError, match="ASCII"):
        load_environment(p)


@pytest.mark.parametrize("text,match", [
    ("", "no geometry"),
    ("v 0 0 nan\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "NaN"),
    ("v 0 0\n", "line 1"),
    ("v 0 0 0\nf 1 x 3\n", "line 2"),
])
def test_obj_errors(tmp_path, text, match):
    p = tmp_path / "bad.obj"
    p.write_text(text)
    with pytest.raises(SceneError, match=match):
        load_environment(p)


def test_missing_file_and_unknown_format(tmp_path):
    with pytest.raises(SceneError, match="cannot read"):
        load_environment(tmp_path / "nope.obj")
    p = tmp_path / "scene.stl"
    p.write_text("solid x\n")
    with pytest.raises(SceneError, match="unsupported"):
        load_environment(p)


def test_unit_scale(tmp_path):
    p = tmp_path / "s.xyz"
    p.write_text("1 2 3\n")
    np.testing.assert_allclose(load_environment(p, unit_scale=0.001).points, [[0.001, 0.002, 0.003]])
    with pytest.raises(SceneError):
        load_environment(p, unit_scale=0.0)


def test_loader_deterministic(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(_cube_obj())
    a, b = load_environment(p), load_environment(p)
    for name in ("points", "segments", "triangles"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


# ---- trajectory specs and lifting -------------------------------------------------

def test_lift_empty_space():
    env = Environment.from_points([[0, 20, 0]])
    spec = lift_waypoints([[0, 0, 0], [1, 0, 0]], 1, 8, 2, env, CFG)
    traj = spec.build()
    assert traj.n_pieces == 1
    np.testing.assert_allclose(traj.controls(0), np.linspace([0, 0, 0], [1, 0, 0], 9), atol=1e-12)


def test_lift_through_wall_names_segment():
    env = Environment.from_mesh(*quad_mesh([0.5, -1, -1], [0, 2, 0], [0, 0, 2]))
    with pytest.raises(LiftError, match="segment 0"):
        lift_waypoints([[0, 0, 0], [1, 0, 0], [1, 1, 0]], None, 8, 2, env, CFG)


def test_lift_piece_count_checked():
    env = Environment.from_points([[0, 20, 0]])
    with pytest.raises(LiftError):
        lift_waypoints([[0, 0, 0], [1, 0, 0]], 3, 8, 2, env, CFG)


def test_collinear_lift_zero_jerk():
    env = Environment.from_points([[0, 20, 0]])
    wp = np.linspace([0, 0, 0], [3, 1.5, 0.3], 4)
    traj = lift_waypoints(wp, 3, 8, 2, env, CFG, T=3.0).build()
    assert abs(jerk_energy(traj.W, traj.T, traj.maps, 0).value) < 1e-8


def test_trajectory_spec_file(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps({"waypoints": [[0, 0, 0], [1, 0, 0], [2, 1, 0]], "T": 2.5, "pieces": 2}))
    spec = load_trajectory_spec(p)
    assert spec.pieces == 2 and spec.initial_T == 2.5 and spec.degree == 8
    p.write_text(json.dumps({"waypoints": [[0, 0, 0], [1, 0, 0]], "pieces": 4}))
    with pytest.raises(ValueError, match="pieces"):
        load_trajectory_spec(p)
    p.write_text(json.dumps({"waypoints": [[0, 0, 0], [1, 0, 0]], "speed": 1}))
    with pytest.raises(ValueError, match="unknown"):
        load_trajectory_spec(p)


def test_trajectory_spec_needs_one_source():
    with pytest.raises(ValueError):
        TrajectorySpec()
    with pytest.raises(ValueError):
        TrajectorySpec(waypoints=np.zeros((2, 3)), initial_controls=np.zeros((1, 9, 3)))


# ---- outputs ----------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (15, 3), elements=st.floats(-1e6, 1e6, allow_subnormal=True)),
       st.floats(1e-3, 1e4))
def test_trajectory_round_trip_bit_exact(tmp_path_factory, W, T):
    traj = CompositeTrajectory(W, T, continuity_maps(2, 8, 2), 2)
    p = tmp_path_factory.mktemp("rt") / "trajectory.json"
    write_trajectory(p, traj, {"status": "converged", "objective": math.inf})
    back = read_trajectory(p)
    assert back.W.tobytes() == traj.W.tobytes()
    assert back.T == traj.T
    assert json.loads(p.read_text())["objective"] == "inf"


def test_read_trajectory_rejects_bad_maps(tmp_path):
    traj = build_composite(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]]), None, 8, 2)
    p = tmp_path / "t.json"
    write_trajectory(p, traj)
    doc = json.loads(p.read_text())
    doc["maps"][0][0][0] = 0.5
    p.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="maps"):
        read_trajectory(p)


def test_samples_table(tmp_path):
    traj = build_composite(np.array([[0, 0, 0], [1, 0, 0], [2, 1, 0.0]]), None, 8, 2, 3.0)
    s = sample_trajectory(traj, 37)
    assert s.shape == (37, len(SAMPLE_COLUMNS))
    assert np.all(np.diff(s[:, 0]) > 0) and s[0, 0] == 0.0 and s[-1, 0] == 3.0
    p = tmp_path / "samples.csv"
    write_samples(p, s)
    assert p.read_text().splitlines()[0] == ",".join(SAMPLE_COLUMNS)
    np.testing.assert_array_equal(read_samples(p), s)


def test_iterations_round_trip(tmp_path):
    recs = [IterationRecord(0, 1.5, 0.25, 1.0, 3, 4, 0.7, 2.0),
            IterationRecord(1, 1.25, 1e-4, 0.0, 2, 4, 0.3, 1.25)]
    p = tmp_path / "iterations.csv"
    write_iterations(p, recs)
    rows = read_iterations(p)
    assert list(rows[0]) == list(IterationRecord.FIELDS)
    assert [tuple(r.values()) for r in rows] == [r.as_row() for r in recs]


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"lambda": 5, "x0": 0.2, "epsilon_vel": None, "epsilon_acc": "inf"}))
    cfg = load_config(p)
    assert cfg.lam == 5 and cfg.x0 == 0.2
    assert math.isinf(cfg.epsilon_vel) and math.isinf(cfg.epsilon_acc)
    p.write_text(json.dumps({"lamda": 5}))
    with pytest.raises(ValueError):
        load_config(p)
    p.write_text(json.dumps({"eta": 0.4}))
    with pytest.raises(ValueError, match="eta"):
        load_config(p)
