"""Command-line interface: every capability as a reproducible subcommand.

Data goes to stdout (text or ``--format json``), diagnostics to stderr,
artifacts (CSV / JSON / PNG) into ``--out-dir``.  Exit codes partition the
error classes:

    0 success          3 integrator divergence   5 infeasible sweep
    2 bad config/file  4 IK non-convergence      6 port busy
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import numpy as np

from .coils import steering_coils
from .config import ConfigError, SystemConfig, control_frame, load_config
from .control import allocate_currents, solve_tip_load, steer_to
from .design import (
    ABLATION_THRESHOLD_W,
    GrasperModel,
    ablation_table,
    blocking_force,
    design_curve,
)
from .phantom import InsertionState, compute_workspace, load_phantom
from .rod import DivergenceError, InvalidParameterError, rod_state_to_csv
from .teleop import run_scenario, scripted_scenario

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_NO_CONVERGENCE = 4
EXIT_INFEASIBLE = 5
EXIT_PORT_BUSY = 6


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config_path: str | None) -> SystemConfig:
    try:
        return load_config(config_path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(doc: dict, fmt: str):
    if fmt == "json":
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
    else:
        for key, value in doc.items():
            click.echo(f"{key}: {value}")


def _write_csv(path: Path, header: str, rows) -> Path:
    with path.open("w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, (int, float, np.floating))
                              else str(v) for v in row) + "\n")
    return path


common_options = [
    click.option("--config", "config_path", envvar="MRENDO_CONFIG", default=None,
                 help="System config JSON (default: bundled table1)."),
    click.option("--out-dir", default="out", show_default=True,
                 help="Directory for CSV/JSON/PNG artifacts."),
    click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                 show_default=True, help="stdout format for the summary."),
    click.option("--seed", type=int, default=0, show_default=True,
                 help="Recorded in artifacts; all commands are deterministic."),
    click.option("--plot/--no-plot", default=True, show_default=True,
                 help="Render matplotlib figures next to the delimited output."),
]


def with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Simulator and controller for a Lorentz-force MRI-driven endoscope."""


@main.command("fk")
@with_common
@click.option("-I", "--current", "currents", multiple=True,
              help="Coil current as name=amps (repeatable), e.g. -I axial=0.213.")
def cmd_fk(config_path, out_dir, fmt, seed, plot, currents):
    """Forward kinematics under given coil currents; exports the rod state."""
    cfg = _load(config_path)
    out = _out_dir(out_dir)
    parsed = {}
    for item in currents:
        try:
            name, value = item.split("=", 1)
            parsed[name] = float(value)
        except ValueError:
            _fail(EXIT_CONFIG, f"bad --current {item!r}, expected name=amps")
    known = {c.name for c in cfg.coils}
    for name in parsed:
        if name not in known:
            _fail(EXIT_CONFIG, f"unknown coil {name!r}; config has {sorted(known)}")
    for coil in cfg.coils:
        if abs(parsed.get(coil.name, 0.0)) > coil.current_limit:
            _fail(EXIT_CONFIG, f"current on {coil.name} exceeds its "
                               f"{coil.current_limit} A limit")
    base = control_frame(cfg.entry_heading)
    env = cfg.environment
    torque = np.zeros(3)
    for coil in steering_coils(cfg.coils):
        moment = base.rotation @ (coil.moment_per_amp * parsed.get(coil.name, 0.0)
                                  * coil.moment_axis)
        torque += np.cross(moment, env.b0)
    try:
        state = solve_tip_load(cfg.rod, base, np.zeros(3), torque)
    except DivergenceError as exc:
        _fail(EXIT_DIVERGENCE, str(exc))
    csv_path = out / "rod_state.csv"
    csv_path.write_text(rod_state_to_csv(state))
    tip = state.tip_pose
    summary = {
        "seed": seed,
        "currents": parsed,
        "tip_position_m": [float(v) for v in tip.origin],
        "bend_angle_deg": float(np.rad2deg(state.bend_angle(base))),
        "applied_torque_nm": [float(v) for v in torque],
        "rod_state_csv": str(csv_path),
    }
    (out / "tip_pose.json").write_text(json.dumps(
        {"position": summary["tip_position_m"],
         "rotation": [[float(v) for v in row] for row in tip.rotation],
         "bend_angle_deg": summary["bend_angle_deg"]}, indent=2))
    if plot:
        from .report import plot_rod_top_view
        summary["figure"] = str(plot_rod_top_view(state, None, out / "rod_state.png"))
    _emit(summary, fmt)


@main.command("ik")
@with_common
@click.option("--bend", "bend_deg", type=float, required=True, help="Target bend (deg).")
@click.option("--azimuth", "azimuth_deg", type=float, default=0.0, show_default=True,
              help="Bend plane azimuth (deg); 0 stays in the imaging slice.")
def cmd_ik(config_path, out_dir, fmt, seed, plot, bend_deg, azimuth_deg):
    """Inverse kinematics + power-optimal coil currents for a bend target."""
    cfg = _load(config_path)
    out = _out_dir(out_dir)
    base = control_frame(cfg.entry_heading)
    try:
        result = steer_to(np.deg2rad(bend_deg), np.deg2rad(azimuth_deg), cfg.rod,
                          steering_coils(cfg.coils), cfg.environment, base,
                          power_cap=cfg.safety.power_cap)
    except InvalidParameterError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except DivergenceError as exc:
        _fail(EXIT_DIVERGENCE, str(exc))
    summary = {
        "seed": seed,
        "target_bend_deg": bend_deg,
        "achieved_bend_deg": float(np.rad2deg(result.ik.rod_state.bend_angle(base))),
        "currents": result.allocation.currents,
        "total_power_w": result.allocation.total_power,
        "tip_torque_nm": [float(v) for v in result.ik.tip_torque],
        "residual_norm": result.ik.residual_norm,
        "iterations": result.ik.iterations,
        "converged": result.ik.converged,
        "consistent": result.consistent,
        "saturated": result.allocation.saturated,
    }
    (out / "ik_result.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    if plot:
        from .report import plot_rod_top_view
        summary["figure"] = str(plot_rod_top_view(result.ik.rod_state, None,
                                                  out / "ik_rod.png"))
    _emit(summary, fmt)
    if not (result.ik.converged and result.consistent):
        click.echo("warning: unconverged result emitted", err=True)
        sys.exit(EXIT_NO_CONVERGENCE)


@main.command("design-curve")
@with_common
@click.option("--total-length", type=float, default=None,
              help="Endoscope length (m); default rod free length + axial coil length.")
@click.option("--target", "target_deg", type=float, default=90.0, show_default=True)
@click.option("--ratios", default="0.05:0.95:46", show_default=True,
              help="Ratio grid start:stop:count.")
def cmd_design_curve(config_path, out_dir, fmt, seed, plot, total_length,
                     target_deg, ratios):
    """Coil/endoscope length ratio sweep minimizing steering power."""
    cfg = _load(config_path)
    out = _out_dir(out_dir)
    axial = next((c for c in cfg.coils if c.kind == "axial"), None)
    if axial is None:
        _fail(EXIT_CONFIG, "config has no axial coil")
    if total_length is None:
        total_length = cfg.rod.free_length + axial.coil_length
    try:
        start, stop, count = ratios.split(":")
        grid = np.linspace(float(start), float(stop), int(count))
    except ValueError:
        _fail(EXIT_CONFIG, f"bad --ratios {ratios!r}, expected start:stop:count")
    try:
        sweep = design_curve(total_length, np.deg2rad(target_deg), axial,
                             cfg.rod, cfg.environment, ratios=grid)
    except InvalidParameterError as exc:
        _fail(EXIT_INFEASIBLE, str(exc))
    csv_path = _write_csv(
        out / "design_curve.csv",
        "# format: design-curve/1\nratio,coil_turns,current_a,power_w,feasible",
        [(r, int(n), c, p, int(f)) for r, n, c, p, f in
         zip(sweep.ratio_grid, sweep.turns, sweep.currents,
             sweep.power_at_target, sweep.feasible)])
    infeasible = [float(r) for r, f in zip(sweep.ratio_grid, sweep.feasible) if not f]
    if infeasible:
        click.echo(f"infeasible ratios (over current limit): {infeasible}", err=True)
    summary = {
        "seed": seed,
        "total_length_m": total_length,
        "target_deg": target_deg,
        "optimum_ratio": sweep.optimum_ratio,
        "power_at_optimum_w": float(np.nanmin(np.where(sweep.feasible,
                                                       sweep.power_at_target, np.nan))),
        "feasible_points": int(sweep.feasible.sum()),
        "design_curve_csv": str(csv_path),
    }
    (out / "design_curve.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    if plot:
        from .report import plot_design_curve
        summary["figure"] = str(plot_design_curve(sweep, out / "design_curve.png"))
    _emit(summary, fmt)


@main.command("workspace")
@with_common
@click.option("--phantom", "phantom_path", default=None,
              help="Phantom map JSON (default: bundled two-ventricle slice).")
@click.option("--current-cap", type=float, default=0.3, show_default=True)
@click.option("--power-cap", type=float, default=1.2, show_default=True)
@click.option("--grid", type=int, default=41, show_default=True)
@click.option("--insertion", "insertion_mm", type=float, default=10.0, show_default=True)
def cmd_workspace(config_path, out_dir, fmt, seed, plot, phantom_path,
                  current_cap, power_cap, grid, insertion_mm):
    """Reachable-tip region over the coil current grid."""
    cfg = _load(config_path)
    out = _out_dir(out_dir)
    try:
        phantom = load_phantom(phantom_path)
        ws = compute_workspace(cfg.rod, cfg.coils, cfg.environment,
                               InsertionState(insertion_mm * 1e-3, 0.03),
                               current_cap, power_cap, grid, phantom)
    except (ConfigError, InvalidParameterError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    if ws.empty:
        _fail(EXIT_INFEASIBLE, ws.diagnostic)
    csv_path = _write_csv(
        out / "workspace_points.csv",
        f"# format: workspace/1\ni_{ws.coil_names[0]}_a,i_{ws.coil_names[1]}_a,"
        "tip_u_mm,tip_v_mm,bend_rad,power_w",
        np.column_stack([ws.currents, ws.tip_points, ws.bend_angles, ws.powers]))
    summary = {
        "seed": seed,
        "samples": int(len(ws.tip_points)),
        "max_bend_deg": float(np.rad2deg(ws.max_bend)),
        "swept_coils": list(ws.coil_names),
        "workspace_csv": str(csv_path),
    }
    (out / "workspace_hull.json").write_text(json.dumps(
        {"boundary_mm": ws.boundary.tolist(), **summary}, indent=2, sort_keys=True))
    if plot:
        from .report import plot_workspace
        summary["figure"] = str(plot_workspace(ws, phantom, out / "workspace.png"))
    _emit(summary, fmt)


@main.command("grasper")
@with_common
@click.option("--max-current", type=float, default=0.5, show_default=True)
@click.option("--points", type=int, default=11, show_default=True)
def cmd_grasper(config_path, out_dir, fmt, seed, plot, max_current, points):
    """Blocking-force curve of the grasper coil."""
    cfg = _load(config_path)
    out = _out_dir(out_dir)
    coil = next((c for c in cfg.coils if c.kind == "grasper"), None)
    if coil is None:
        _fail(EXIT_CONFIG, "config has no grasper coil")
    model = GrasperModel(coil)
    currents = np.linspace(0.0, min(max_current, coil.current_limit), points)
    forces = np.array([blocking_force(model, i, cfg.environment) for i in currents])
    csv_path = _write_csv(out / "grasper_force.csv",
                          "# format: grasper-force/1\ncurrent_a,force_n",
                          np.column_stack([currents, forces]))
    summary = {
        "seed": seed,
        "coil_resistance_ohm": coil.resistance,
        "moment_per_amp_am2": coil.moment_per_amp,
        "force_at_max_n": float(forces[-1]),
        "measured_max_force_n": 0.031,
        "note": ("ideal moment model; the bench measurement peaked at 31 mN, "
                 "about 7x below the ideal prediction (calibration_factor covers the gap)"),
        "grasper_csv": str(csv_path),
    }
    (out / "grasper.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    if plot:
        from .report import plot_grasper_force
        summary["figure"] = str(plot_grasper_force(currents, forces, out / "grasper.png"))
    _emit(summary, fmt)


@main.command("ablation")
@with_common
@click.option("--resistance", type=float, default=11.0, show_default=True,
              help="Heater coil resistance (ohm).")
@click.option("--currents-ma", default="50,100,200,250", show_default=True)
def cmd_ablation(config_path, out_dir, fmt, seed, plot, resistance, currents_ma):
    """Joule-heating power table with the ablation-capability flag."""
    del config_path
    out = _out_dir(out_dir)
    try:
        currents = [float(v) * 1e-3 for v in currents_ma.split(",")]
    except ValueError:
        _fail(EXIT_CONFIG, f"bad --currents-ma {currents_ma!r}")
    try:
        rows = ablation_table(resistance, currents)
    except InvalidParameterError as exc:
        _fail(EXIT_CONFIG, str(exc))
    csv_path = _write_csv(out / "ablation_table.csv",
                          "# format: ablation/1\ncurrent_a,power_w,ablation_capable",
                          [(r.current, r.power, int(r.ablation_capable)) for r in rows])
    summary = {
        "seed": seed,
        "resistance_ohm": resistance,
        "threshold_w": ABLATION_THRESHOLD_W,
        "powers_w": [r.power for r in rows],
        "capable": [r.ablation_capable for r in rows],
        "ablation_csv": str(csv_path),
    }
    (out / "ablation.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    if plot:
        from .report import plot_ablation
        summary["figure"] = str(plot_ablation(rows, out / "ablation.png"))
    _emit(summary, fmt)


@main.command("serve")
@with_common
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--phantom", "phantom_path", default=None)
@click.option("--scenario", default=None,
              help="Replay a scenario deterministically and exit (no sockets).")
@click.option("--http-port", type=int, default=None,
              help="Also serve the teleop WebSocket (and UI) on this port.")
@click.option("--ui-dir", default=None, help="Built frontend to serve at /.")
def cmd_serve(config_path, out_dir, fmt, seed, plot, host, port, phantom_path,
              scenario, http_port, ui_dir):
    """Run the teleop service, or replay a scripted scenario."""
    del plot
    cfg = _load(config_path)
    out = _out_dir(out_dir)
    try:
        phantom = load_phantom(phantom_path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    if scenario is not None:
        try:
            scn = scripted_scenario(scenario)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        result = run_scenario(scn, config=cfg, phantom=phantom)
        telemetry_path = out / f"{scn.name}_telemetry.ndjson"
        with telemetry_path.open("w") as fh:
            for t in result.telemetry:
                fh.write(t.to_json_line() + "\n")
        (out / f"{scn.name}_events.json").write_text(
            json.dumps(result.events, indent=2))
        summary = {"seed": seed, **result.summary,
                   "telemetry_ndjson": str(telemetry_path),
                   "passed": result.passed}
        (out / f"{scn.name}_summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True))
        _emit(summary, fmt)
        if not result.passed:
            for failure in result.failures:
                click.echo(f"checkpoint failure: {failure}", err=True)
            sys.exit(1)
        return

    from .server import PortBusyError, TeleopServer, serve_with_web

    server = TeleopServer(config=cfg, phantom=phantom, host=host, port=port)

    async def _run():
        if http_port is not None:
            await serve_with_web(server, host, http_port, ui_dir)
        else:
            await server.serve()

    click.echo(f"teleop/1 ndjson on tcp://{host}:{port}"
               + (f", ws://{host}:{http_port}/ws" if http_port else ""), err=True)
    try:
        asyncio.run(_run())
    except PortBusyError as exc:
        _fail(EXIT_PORT_BUSY, str(exc))
    except KeyboardInterrupt:
        events_path = out / "event_log.json"
        events_path.write_text(json.dumps(server.session.events, indent=2))
        click.echo(f"interrupted; event log flushed to {events_path}", err=True)


if __name__ == "__main__":
    main()
