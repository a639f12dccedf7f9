"""Report figures rendered to PNG files next to the CSV output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import Environment  # noqa: E402
from .splines import CompositeTrajectory  # noqa: E402

__all__ = ["plot_convergence", "plot_profiles", "plot_trajectory", "render_report"]

_STYLE = {
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.linewidth": 0.4,
    "grid.alpha": 0.5,
    "lines.linewidth": 1.4,
    "font.size": 9,
}


def _env_scatter(ax, env: Environment, max_points: int = 20000):
    if env.triangles.shape[0]:
        V = env.points
        for tri in env.triangles:
            loop = V[np.r_[tri, tri[0]]]
            ax.plot(loop[:, 0], loop[:, 1], color="0.6", lw=0.4)
    else:
        P = env.points
        if P.shape[0] > max_points:
            P = P[np.linspace(0, P.shape[0] - 1, max_points).astype(int)]
        ax.scatter(P[:, 0], P[:, 1], s=2, color="0.5")


def plot_trajectory(path, traj: CompositeTrajectory, env: Environment | None = None,
                    initial: CompositeTrajectory | None = None):
    """Top view (x, y) of the curve and its control points."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 5.0))
        if env is not None:
            _env_scatter(ax, env)
        t = np.linspace(0.0, traj.T, 800)
        if initial is not None:
            p0 = initial.sample(np.linspace(0.0, initial.T, 800))
            ax.plot(p0[:, 0], p0[:, 1], "--", color="tab:gray", label="initial")
        p = traj.sample(t)
        ax.plot(p[:, 0], p[:, 1], color="tab:blue", label="optimized")
        c = traj.controls().reshape(-1, 3)
        ax.plot(c[:, 0], c[:, 1], ".", ms=3, color="tab:orange", label="control points")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend(frameon=False, loc="best")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)


def plot_profiles(path, samples: np.ndarray, v_max: float | None = None,
                  a_max: float | None = None):
    """Speed and acceleration magnitude over time from a sample table."""
    t = samples[:, 0]
    speed = np.linalg.norm(samples[:, 4:7], axis=1)
    accel = np.linalg.norm(samples[:, 7:10], axis=1)
    with plt.rc_context(_STYLE):
        fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 4.2))
        a1.plot(t, speed, color="tab:blue")
        a2.plot(t, accel, color="tab:red")
        for ax, lim in ((a1, v_max), (a2, a_max)):
            if lim is not None and np.isfinite(lim):
                ax.axhline(lim, color="k", ls=":", lw=1)
        a1.set_ylabel("speed [m/s]")
        a2.set_ylabel("accel. [m/s$^2$]")
        a2.set_xlabel("t [s]")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)


def plot_convergence(path, rows: list[dict]):
    """Objective and gradient norm per outer iteration (log scale)."""
    it = np.array([r["iter"] for r in rows])
    obj = np.array([r["objective"] for r in rows])
    g = np.array([r["grad_inf_norm"] for r in rows])
    with plt.rc_context(_STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        a1.plot(it, obj - obj.min() + 1e-16, marker=".", color="tab:blue")
        a1.set_yscale("log")
        a1.set_ylabel("objective - final")
        a2.semilogy(it, g, marker=".", color="tab:green")
        a2.set_ylabel(r"$\|\nabla\|_\infty$")
        for ax in (a1, a2):
            ax.set_xlabel("iteration")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)


def render_report(out_dir, traj: CompositeTrajectory, samples: np.ndarray, rows: list[dict],
                  env: Environment | None = None, initial: CompositeTrajectory | None = None,
                  v_max: float | None = None, a_max: float | None = None) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {
        "trajectory_png": out / "trajectory.png",
        "profiles_png": out / "profiles.png",
        "convergence_png": out / "convergence.png",
    }
    plot_trajectory(paths["trajectory_png"], traj, env, initial)
    plot_profiles(paths["profiles_png"], samples, v_max, a_max)
    if rows:
        plot_convergence(paths["convergence_png"], rows)
    else:
        del paths["convergence_png"]
    return paths
