"""Figure rendering for the CLI report path (PNG files next to the CSV/JSON)."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .design import ABLATION_THRESHOLD_W, DesignSweep  # noqa: E402
from .phantom import PhantomMap, WorkspaceResult  # noqa: E402
from .rod import RodState  # noqa: E402


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _draw_phantom(ax, phantom: PhantomMap):
    for poly in phantom.wall_polygons:
        closed = np.vstack([poly, poly[:1]])
        ax.plot(closed[:, 0], closed[:, 1], color="0.35", lw=1.2)
    tumor = plt.Circle(phantom.tumor_center, phantom.tumor_radius,
                       color="goldenrod", alpha=0.7, label="tumor")
    ax.add_patch(tumor)
    ax.plot(*phantom.entry_position, marker="s", color="crimson", ms=6, label="entry")


def plot_rod_top_view(state: RodState, phantom: PhantomMap | None,
                      path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if phantom is not None:
        _draw_phantom(ax, phantom)
        pts = phantom.slice_frame.to_slice(state.positions)
    else:
        pts = 1e3 * np.column_stack([state.positions[:, 0], state.positions[:, 2]])
    ax.plot(pts[:, 0], pts[:, 1], color="tab:blue", lw=2.0, label="endoscope")
    ax.plot(*pts[-1], marker="o", color="tab:blue", ms=5)
    ax.set_xlabel("u (mm)")
    ax.set_ylabel("v (mm)  [B0 direction]")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("rod shape, slice plane")
    return _finish(fig, path)


def plot_design_curve(sweep: DesignSweep, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ok = sweep.feasible
    ax.plot(sweep.ratio_grid[ok], sweep.power_at_target[ok], "o-",
            color="tab:blue", ms=3, label="feasible")
    bad = ~ok & np.isfinite(sweep.power_at_target)
    if bad.any():
        ax.plot(sweep.ratio_grid[bad], sweep.power_at_target[bad], "x",
                color="0.6", ms=4, label="over current limit")
    ax.axvline(sweep.optimum_ratio, color="crimson", ls="--", lw=1,
               label=f"optimum {sweep.optimum_ratio:.2f}")
    ax.set_xlabel("coil length / endoscope length")
    ax.set_ylabel(f"power to hold {np.rad2deg(sweep.target_angle):.0f}° (W)")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("coil length design curve")
    return _finish(fig, path)


def plot_workspace(ws: WorkspaceResult, phantom: PhantomMap, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    _draw_phantom(ax, phantom)
    sc = ax.scatter(ws.tip_points[:, 0], ws.tip_points[:, 1],
                    c=np.rad2deg(ws.bend_angles), s=4, cmap="viridis")
    if len(ws.boundary) >= 3:
        ax.plot(ws.boundary[:, 0], ws.boundary[:, 1], color="tab:blue", lw=1.0)
    fig.colorbar(sc, ax=ax, label="bend angle (deg)")
    ax.set_xlabel("u (mm)")
    ax.set_ylabel("v (mm)")
    ax.set_aspect("equal")
    ax.set_title(f"reachable tips, max bend {np.rad2deg(ws.max_bend):.0f}°")
    return _finish(fig, path)


def plot_grasper_force(currents: np.ndarray, forces: np.ndarray, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(1e3 * currents, 1e3 * forces, "o-", color="tab:blue", ms=3)
    ax.axhline(31.0, color="crimson", ls="--", lw=1, label="31 mN measured max")
    ax.set_xlabel("current (mA)")
    ax.set_ylabel("blocking force (mN)")
    ax.legend(fontsize=8)
    ax.set_title("grasper blocking force model")
    return _finish(fig, path)


def plot_ablation(rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    currents = [1e3 * r.current for r in rows]
    powers = [r.power for r in rows]
    colors = ["crimson" if r.ablation_capable else "tab:blue" for r in rows]
    ax.bar(range(len(rows)), powers, color=colors)
    ax.set_xticks(range(len(rows)), [f"{c:.0f}" for c in currents])
    ax.axhline(ABLATION_THRESHOLD_W, color="crimson", ls="--", lw=1,
               label=f"ablation threshold {ABLATION_THRESHOLD_W} W")
    ax.set_xlabel("current (mA)")
    ax.set_ylabel("power (W)")
    ax.legend(fontsize=8)
    ax.set_title("Joule heating per current setting")
    return _finish(fig, path)
