"""Scene, trajectory and configuration files; run reports."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SolverConfig
from .geometry import Bvh, Environment, build_bvh
from .solver import IterationRecord, SolverResult
from .splines import CompositeTrajectory, build_composite, continuity_maps

log = logging.getLogger(__name__)

__all__ = [
    "LiftError",
    "RunReport",
    "SceneError",
    "TrajectorySpec",
    "lift_waypoints",
    "load_config",
    "load_environment",
    "load_trajectory_spec",
    "read_iterations",
    "read_samples",
    "read_trajectory",
    "sample_trajectory",
    "write_iterations",
    "write_samples",
    "write_trajectory",
]

FORMAT_TAG = "subdiv-traj/1"
SAMPLE_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az")


class SceneError(ValueError):
    pass


class LiftError(ValueError):
    pass


# --------------------------------------------------------------------------
# scenes
# --------------------------------------------------------------------------

def _parse_obj(text: str):
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == "v":
                verts.append([float(v) for v in parts[1:4]])
                if len(verts[-1]) != 3:
                    raise ValueError("vertex needs three coordinates")
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ValueError("face needs at least three vertices")
                # fan triangulation of polygons
                faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
        except ValueError as exc:
            raise SceneError(f"OBJ line {lineno}: {exc}") from None
    return np.array(verts, float).reshape(-1, 3), np.array(faces, np.int64).reshape(-1, 3)


def _parse_ply(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise SceneError("not a PLY file")
    n_vert = n_face = 0
    vprops: list[str] = []
    current = None
    body = None
    for i, line in enumerate(lines[1:], 1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise SceneError("only ASCII PLY is supported")
        if tok[0] == "element":
            current = tok[1]
            if current == "vertex":
                n_vert = int(tok[2])
            elif current == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and current == "vertex":
            vprops.append(tok[-1])
        elif tok[0] == "end_header":
            body = i + 1
            break
    if body is None:
        raise SceneError("PLY header has no end_header")
    try:
        xi, yi, zi = (vprops.index(c) for c in "xyz")
    except ValueError:
        raise SceneError("PLY vertices need x, y, z properties") from None
    rows = [ln.split() for ln in lines[body:] if ln.strip()]
    if len(rows) < n_vert + n_face:
        raise SceneError("PLY body shorter than declared element counts")
    try:
        V = np.array([[float(r[xi]), float(r[yi]), float(r[zi])] for r in rows[:n_vert]]).reshape(-1, 3)
        faces = []
        for r in rows[n_vert:n_vert + n_face]:
            k = int(r[0])
            idx = [int(v) for v in r[1:1 + k]]
            faces.extend([idx[0], idx[j], idx[j + 1]] for j in range(1, k - 1))
    except (ValueError, IndexError) as exc:
        raise SceneError(f"PLY parse failure: {exc}") from None
    return V, np.array(faces, np.int64).reshape(-1, 3)


def _parse_xyz(text: str):
    pts = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].replace(",", " ").split()
        if not parts:
            continue
        try:
            pts.append([float(v) for v in parts[:3]])
        except ValueError:
            raise SceneError(f"XYZ line {lineno}: cannot parse coordinates") from None
        if len(pts[-1]) != 3:
            raise SceneError(f"XYZ line {lineno}: need three coordinates")
    return np.array(pts, float).reshape(-1, 3)


def load_environment(path, unit_scale: float = 1.0, fmt: str | None = None) -> Environment:
    """Read an OBJ mesh, an ASCII PLY or an XYZ point cloud, scaled to meters.

    PLY files with faces load as meshes, without faces as point clouds.
    """
    path = Path(path)
    if not unit_scale > 0:
        raise SceneError("unit_scale must be positive")
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneError(f"cannot read scene {path}: {exc}") from None
    if fmt == "obj":
        V, F = _parse_obj(text)
        mesh = True
    elif fmt == "ply":
        V, F = _parse_ply(text)
        mesh = F.size > 0
    elif fmt == "xyz":
        V, F = _parse_xyz(text), None
        mesh = False
    else:
        raise SceneError(f"unsupported scene format {fmt!r}")
    if V.shape[0] == 0:
        raise SceneError(f"scene {path} has no geometry")
    if not np.all(np.isfinite(V)):
        raise SceneError(f"scene {path} contains NaN or infinite coordinates")
    V = V * unit_scale
    try:
        if mesh:
            return Environment.from_mesh(V, F)
        return Environment.from_points(V)
    except ValueError as exc:
        raise SceneError(str(exc)) from None


# --------------------------------------------------------------------------
# trajectory specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectorySpec:
    """Initial trajectory: either controls ``(N, M+1, 3)`` or waypoints ``(N+1, 3)``."""

    degree: int = 8
    continuity: int = 2
    initial_T: float = 1.0
    waypoints: np.ndarray | None = None
    initial_controls: np.ndarray | None = None

    def __post_init__(self):
        if (self.waypoints is None) == (self.initial_controls is None):
            raise ValueError("give exactly one of waypoints or initial_controls")
        if not self.initial_T > 0:
            raise ValueError("initial_T must be positive")

    @property
    def pieces(self) -> int:
        if self.waypoints is not None:
            return len(self.waypoints) - 1
        return len(self.initial_controls)

    def build(self) -> CompositeTrajectory:
        init = self.waypoints if self.waypoints is not None else self.initial_controls
        return build_composite(np.asarray(init, float), None, self.degree, self.continuity,
                               self.initial_T)


def load_trajectory_spec(path) -> TrajectorySpec:
    """JSON with ``waypoints`` or ``controls`` plus optional ``degree``,
    ``continuity``, ``T`` and ``pieces`` (checked against the data)."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read trajectory spec {path}: {exc}") from None
    unknown = set(data) - {"waypoints", "controls", "degree", "continuity", "T", "pieces"}
    if unknown:
        raise ValueError(f"unknown trajectory keys {sorted(unknown)}")
    wp = np.asarray(data["waypoints"], float) if "waypoints" in data else None
    ctrl = np.asarray(data["controls"], float) if "controls" in data else None
    degree = int(data.get("degree", ctrl.shape[1] - 1 if ctrl is not None else 8))
    spec = TrajectorySpec(degree, int(data.get("continuity", 2)), float(data.get("T", 1.0)), wp, ctrl)
    if "pieces" in data and int(data["pieces"]) != spec.pieces:
        raise ValueError(f"pieces={data['pieces']} disagrees with the data ({spec.pieces})")
    return spec


def lift_waypoints(waypoints, n_pieces: int | None, degree: int, continuity: int,
                   env: Environment, config: SolverConfig, bvh: Bvh | None = None,
                   T: float = 1.0) -> TrajectorySpec:
    """Lift a polyline to a composite curve with one piece per segment.

    The polyline must clear ``d0 + x0``; the lifted hulls must clear ``d0``.
    """
    wp = np.asarray(waypoints, float)
    if wp.ndim != 2 or wp.shape[1] != 3 or wp.shape[0] < 2:
        raise LiftError("waypoints must be an (n >= 2, 3) array")
    if n_pieces is not None and n_pieces != wp.shape[0] - 1:
        raise LiftError(f"{wp.shape[0]} waypoints give {wp.shape[0] - 1} pieces, not {n_pieces}")
    bvh = bvh or build_bvh(env, config.cutoff)
    for i in range(wp.shape[0] - 1):
        d, pid = bvh.nearest(wp[i:i + 2])
        if not d >= config.cutoff:
            raise LiftError(f"segment {i} passes within {d:.6g} m of "
                            f"{env.describe_primitive(int(pid))} (needs {config.cutoff:g})")
    spec = TrajectorySpec(degree, continuity, T, waypoints=wp)
    traj = spec.build()
    for i, ctrl in enumerate(traj.controls()):
        d, pid = bvh.nearest(ctrl)
        if not d > config.d0:
            raise LiftError(f"lifted piece {i} hull within {d:.6g} m of "
                            f"{env.describe_primitive(int(pid))}")
    return spec


def load_config(path) -> SolverConfig:
    """JSON configuration; ``null``, ``"inf"`` and ``"infinity"`` mean infinity."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    for k, v in list(data.items()):
        if v is None or (isinstance(v, str) and v.lower() in ("inf", "infinity")):
            data[k] = math.inf
    return SolverConfig.from_dict(data)


# --------------------------------------------------------------------------
# outputs
# --------------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def write_trajectory(path, traj: CompositeTrajectory, extra: dict | None = None) -> None:
    """JSON with ``W``, ``T``, maps and per-piece controls.

    Floats are written with ``repr`` (shortest round-trip form), so reading
    the file back reproduces ``W`` and ``T`` bit-exactly.
    """
    doc = {
        "format": FORMAT_TAG,
        "degree": traj.degree,
        "continuity": traj.continuity,
        "n_pieces": traj.n_pieces,
        "T": traj.T,
        "W": traj.W.tolist(),
        "maps": traj.maps.tolist(),
        "controls": traj.controls().tolist(),
    }
    if extra:
        doc.update({k: _jsonable(v) for k, v in extra.items()})
    Path(path).write_text(json.dumps(doc, indent=1))


def read_trajectory(path) -> CompositeTrajectory:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT_TAG:
        raise ValueError(f"{path}: not a {FORMAT_TAG} trajectory file")
    maps = continuity_maps(int(doc["n_pieces"]), int(doc["degree"]), int(doc["continuity"]))
    stored = np.asarray(doc["maps"], float)
    if stored.shape != maps.shape or not np.array_equal(stored, maps):
        raise ValueError(f"{path}: stored extraction maps do not match the declared layout")
    return CompositeTrajectory(np.asarray(doc["W"], float), float(doc["T"]), maps, int(doc["continuity"]))


def write_iterations(path, records: list[IterationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(IterationRecord.FIELDS)
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.as_row()])


def read_iterations(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (int(v) if k in ("iter", "active_pairs", "history_size") else float(v))
                    for k, v in r.items()})
    return out


def sample_trajectory(traj: CompositeTrajectory, n_samples: int = 501) -> np.ndarray:
    """Rows ``t, x, y, z, vx, vy, vz, ax, ay, az`` on a uniform time grid."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    t = np.linspace(0.0, traj.T, n_samples)
    return np.column_stack([t, traj.sample(t, 0), traj.sample(t, 1), traj.sample(t, 2)])


def write_samples(path, samples: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for row in samples:
            w.writerow([repr(float(v)) for v in row])


def read_samples(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != SAMPLE_COLUMNS:
            raise ValueError(f"{path}: unexpected sample columns {header}")
        return np.array([[float(v) for v in row] for row in rd])


@dataclass
class RunReport:
    """Everything a run writes: final state, log rows, samples and timings."""

    trajectory: CompositeTrajectory
    records: list[IterationRecord]
    samples: np.ndarray
    status: str
    mode: str
    wall_seconds: float
    grad_inf_norm: float
    objective: float
    history_size: int
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_result(cls, result: SolverResult, wall_seconds: float, n_samples: int = 501) -> "RunReport":
        return cls(result.trajectory, result.log, sample_trajectory(result.trajectory, n_samples),
                   result.status, result.mode, wall_seconds, result.grad_inf_norm,
                   result.objective, len(result.history))

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        os.makedirs(out, exist_ok=True)
        paths = {
            "trajectory": out / "trajectory.json",
            "iterations": out / "iterations.csv",
            "samples": out / "samples.csv",
        }
        extra = {
            "status": self.status,
            "mode": self.mode,
            "iterations": len(self.records),
            "wall_seconds": self.wall_seconds,
            "grad_inf_norm": self.grad_inf_norm,
            "objective": self.objective,
            "history_size": self.history_size,
            **self.extra,
        }
        write_trajectory(paths["trajectory"], self.trajectory, extra)
        write_iterations(paths["iterations"], self.records)
        write_samples(paths["samples"], self.samples)
        return paths
