"""Fixed-tick teleoperation session: insertion, steering, imaging, grasping.

One quasi-static solve per tick: the commanded bend is slew-limited, the
power-optimal allocator produces coil currents under the safety caps, and
the rod equilibrium under the achieved torque becomes the published pose.
Everything is deterministic: no wall clock, no randomness, so identical
command streams produce byte-identical telemetry streams.

Wire payloads follow the versioned "teleop/1" schema (see README).
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .coils import grasper_coil, steering_coils
from .config import ConfigError, SystemConfig, load_config
from .control import solve_tip_load, steer_to
from .design import GrasperModel, blocking_force
from .phantom import PhantomMap, collide, load_phantom, tumor_reached
from .rod import DivergenceError, FramePose, InvalidParameterError

PROTOCOL_SCHEMA = "teleop/1"
SCENARIO_SCHEMA = "teleop-scenario/1"
MAX_INSERT_SPEED = 10.0  # mm/s hard clamp on commanded insertion velocity


@dataclass(frozen=True)
class Command:
    """Operator intent for one control interval; values clamped on ingest."""

    insert_velocity: float = 0.0   # mm/s
    target_bend: float = 0.0       # rad
    bend_azimuth: float = 0.0      # rad
    coils_enabled: bool = True
    grasper_current: float = 0.0   # A
    client_id: str = "local"
    sequence_number: int = 0


@dataclass(frozen=True)
class Telemetry:
    """Published state snapshot; `polyline_mm` has segment_count + 1 points."""

    tick: int
    sim_time: float
    mode: str
    insertion_mm: float
    applied_bend_deg: float
    bend_azimuth_deg: float
    base_mm: tuple[float, float]
    tip_mm: tuple[float, float]
    tip_heading_deg: float
    polyline_mm: list[tuple[float, float]]
    currents: dict[str, float]
    total_power: float
    imaging_distorted: bool
    collision: bool
    tumor_reached: bool
    grasper_force: float
    saturated: bool
    solver_warning: bool

    def to_payload(self) -> dict:
        doc = asdict(self)
        doc["type"] = "telemetry"
        doc["schema"] = PROTOCOL_SCHEMA
        return doc

    def to_json_line(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"))


class SimSession:
    """Mutable session state; owned by a single simulation loop.

    Readers receive immutable Telemetry snapshots, so concurrent fan-out is
    safe; command ingestion must happen on the loop via handle_command.
    """

    def __init__(self, config: SystemConfig | None = None,
                 phantom: PhantomMap | None = None,
                 max_insertion: float = 0.03):
        self.config = config or load_config()
        self.phantom = phantom or load_phantom()
        self.rod = self.config.rod
        self.steering = steering_coils(self.config.coils)
        self.grasper = grasper_coil(self.config.coils)
        self.grasper_model = GrasperModel(self.grasper) if self.grasper else None
        self.entry = self.phantom.entry_frame()
        self.max_insertion = max_insertion
        self.tick = 0
        self.inserted = 0.0          # m
        self.current_bend = 0.0      # rad, slew-limited actual command
        self.azimuth = 0.0
        self.command = Command()
        self.operator: str | None = None
        self.last_sequence: dict[str, int] = {}
        self.events: list[dict] = []
        self.last_rod_state = None
        self.last_currents: dict[str, float] = {c.name: 0.0 for c in self.steering}
        self.last_steering_power = 0.0
        self.last_telemetry: Telemetry | None = None
        self._steer_cache: OrderedDict[tuple, tuple] = OrderedDict()

    # -- command ingestion -------------------------------------------------

    def handle_command(self, cmd: Command) -> dict:
        """Validate, clamp, and apply a command; returns the teleop/1 ack."""
        if self.operator is None:
            self.operator = cmd.client_id
        if cmd.client_id != self.operator:
            return {"type": "ack", "schema": PROTOCOL_SCHEMA, "seq": cmd.sequence_number,
                    "client_id": cmd.client_id, "status": "rejected",
                    "reason": "operator lock held"}
        last = self.last_sequence.get(cmd.client_id, -1)
        if cmd.sequence_number <= last:
            return {"type": "ack", "schema": PROTOCOL_SCHEMA, "seq": cmd.sequence_number,
                    "client_id": cmd.client_id, "status": "stale"}
        self.last_sequence[cmd.client_id] = cmd.sequence_number

        safety = self.config.safety
        clamped = []

        def clamp(value, lo, hi, name):
            out = min(max(value, lo), hi)
            if out != value:
                clamped.append(name)
            return out

        bend = clamp(cmd.target_bend, -safety.max_bend, safety.max_bend, "target_bend")
        speed = clamp(cmd.insert_velocity, -MAX_INSERT_SPEED, MAX_INSERT_SPEED,
                      "insert_velocity")
        g_limit = self.grasper.current_limit if self.grasper else 0.0
        grasp = clamp(cmd.grasper_current, -g_limit, g_limit, "grasper_current")
        azimuth = float(np.arctan2(np.sin(cmd.bend_azimuth), np.cos(cmd.bend_azimuth)))
        self.command = replace(cmd, target_bend=bend, insert_velocity=speed,
                               grasper_current=grasp, bend_azimuth=azimuth)
        applied = {
            "insert_velocity": speed, "target_bend": bend, "bend_azimuth": azimuth,
            "coils_enabled": bool(cmd.coils_enabled), "grasper_current": grasp,
        }
        return {"type": "ack", "schema": PROTOCOL_SCHEMA, "seq": cmd.sequence_number,
                "client_id": cmd.client_id,
                "status": "clamped" if clamped else "accepted",
                "clamped_fields": clamped, "applied": applied}

    # -- stepping ----------------------------------------------------------

    def _event(self, name: str, **detail):
        self.events.append({"tick": self.tick, "event": name, **detail})

    def _steer(self, base: FramePose):
        """Solve the quasi-static steering problem for the current command."""
        key = (round(self.current_bend, 12), round(self.azimuth, 12),
               round(self.inserted, 12))
        cached = self._steer_cache.get(key)
        if cached is not None:
            self._steer_cache.move_to_end(key)
            return cached
        result = steer_to(self.current_bend, self.azimuth, self.rod,
                          self.steering, self.config.environment, base,
                          power_cap=self.config.safety.power_cap)
        out = (result.ik.rod_state, dict(result.allocation.currents),
               result.allocation.total_power,
               result.allocation.saturated, result.warning)
        self._steer_cache[key] = out
        if len(self._steer_cache) > 256:
            self._steer_cache.popitem(last=False)
        return out

    def step(self, dt: float) -> Telemetry:
        """Advance one fixed tick and publish telemetry.

        Telemetry is produced even when the solver fails (previous pose
        held, warning raised): the loop never goes silent.
        """
        safety = self.config.safety
        if abs(dt * safety.tick_rate - 1.0) > 1e-9:
            raise InvalidParameterError("dt must equal 1 / tick_rate")
        self.tick += 1
        cmd = self.command

        self.inserted = min(max(self.inserted + cmd.insert_velocity * 1e-3 * dt, 0.0),
                            self.max_insertion)
        if cmd.coils_enabled:
            # Commanded bend ramps at the slew limit while energized.
            step_limit = safety.slew_rate * dt
            delta = min(max(cmd.target_bend - self.current_bend, -step_limit), step_limit)
            self.current_bend += delta
        else:
            # De-energized coils exert no torque: the rod springs straight.
            self.current_bend = 0.0
        self.azimuth = cmd.bend_azimuth

        base = FramePose(self.entry.origin + self.inserted * self.entry.tangent,
                         self.entry.rotation, label="control")
        solver_warning = False
        saturated = False
        currents = {c.name: 0.0 for c in self.steering}
        steering_power = 0.0
        if cmd.coils_enabled and abs(self.current_bend) > 1e-12:
            try:
                state, currents, steering_power, saturated, warn = self._steer(base)
                solver_warning = warn
                self.last_rod_state = state
                self.last_currents = currents
                self.last_steering_power = steering_power
            except (DivergenceError, np.linalg.LinAlgError):
                solver_warning = True
                state = self.last_rod_state
                currents = dict(self.last_currents)
                steering_power = self.last_steering_power
                if state is None:
                    state = solve_tip_load(self.rod, base, np.zeros(3), np.zeros(3))
                self._event("solver_failure")
        else:
            state = solve_tip_load(self.rod, base, np.zeros(3), np.zeros(3))
            self.last_rod_state = state
            self.last_currents = currents
            self.last_steering_power = 0.0

        # Grasper shares the power budget; steering has priority.
        grasper_current = 0.0
        grasper_power = 0.0
        if self.grasper is not None and cmd.grasper_current != 0.0:
            budget = max(safety.power_cap - steering_power, 0.0)
            r_g = self.grasper.resistance
            i_budget = float(np.sqrt(budget / r_g))
            magnitude = min(abs(cmd.grasper_current), self.grasper.current_limit, i_budget)
            grasper_current = float(np.sign(cmd.grasper_current)) * magnitude
            if grasper_current == 0.0:
                grasper_current = 0.0   # never publish -0.0
            if magnitude == i_budget and magnitude < abs(cmd.grasper_current):
                grasper_power = budget          # exact: total pins to the cap
                saturated = True
            else:
                grasper_power = grasper_current**2 * r_g
                if magnitude < abs(cmd.grasper_current):
                    saturated = True
        total_power = steering_power + grasper_power
        if total_power > safety.power_cap:   # arithmetic guard, never by design
            total_power = safety.power_cap

        sf = self.phantom.slice_frame
        polyline = sf.to_slice(state.positions)
        tip = polyline[-1]
        tangent = state.rotations[-1][:, 2]
        heading = float(np.arctan2(np.dot(tangent, sf.u_axis), np.dot(tangent, sf.v_axis)))
        path = np.vstack([sf.to_slice(self.entry.origin)[None, :], polyline])
        hit = collide(path, self.phantom)
        reached = tumor_reached(tip, heading, self.phantom, safety.capture_distance)
        distorted = bool(cmd.coils_enabled and any(abs(v) > 0.0 for v in currents.values()))
        grasper_force = (blocking_force(self.grasper_model, grasper_current,
                                        self.config.environment)
                         if self.grasper_model else 0.0)

        mode = ("imaging" if not cmd.coils_enabled
                else "grasping" if grasper_current != 0.0 else "steering")
        prev = self.last_telemetry
        if prev is None or prev.mode != mode:
            self._event("mode", mode=mode)
        if hit.collided and (prev is None or not prev.collision):
            self._event("collision", segment=hit.rod_segment)
        if reached and (prev is None or not prev.tumor_reached):
            self._event("tumor_reached")
        if saturated and (prev is None or not prev.saturated):
            self._event("saturation")

        all_currents = dict(currents)
        if self.grasper is not None:
            all_currents[self.grasper.name] = grasper_current
        telemetry = Telemetry(
            tick=self.tick,
            sim_time=self.tick / safety.tick_rate,
            mode=mode,
            insertion_mm=self.inserted * 1e3,
            applied_bend_deg=float(np.rad2deg(self.current_bend)),
            bend_azimuth_deg=float(np.rad2deg(self.azimuth)),
            base_mm=(float(polyline[0][0]), float(polyline[0][1])),
            tip_mm=(float(tip[0]), float(tip[1])),
            tip_heading_deg=float(np.rad2deg(heading)),
            polyline_mm=[(float(p[0]), float(p[1])) for p in polyline],
            currents={k: float(v) for k, v in all_currents.items()},
            total_power=float(total_power),
            imaging_distorted=distorted,
            collision=bool(hit.collided),
            tumor_reached=bool(reached),
            grasper_force=grasper_force,
            saturated=bool(saturated),
            solver_warning=bool(solver_warning),
        )
        self.last_telemetry = telemetry
        return telemetry

    def snapshot(self) -> Telemetry:
        """Telemetry of the untouched initial state (tick 0)."""
        base = FramePose(self.entry.origin + self.inserted * self.entry.tangent,
                         self.entry.rotation, label="control")
        state = solve_tip_load(self.rod, base, np.zeros(3), np.zeros(3))
        sf = self.phantom.slice_frame
        polyline = sf.to_slice(state.positions)
        tangent = state.rotations[-1][:, 2]
        heading = float(np.arctan2(np.dot(tangent, sf.u_axis), np.dot(tangent, sf.v_axis)))
        names = {c.name: 0.0 for c in self.config.coils}
        return Telemetry(
            tick=self.tick, sim_time=self.tick / self.config.safety.tick_rate,
            mode="imaging" if not self.command.coils_enabled else "steering",
            insertion_mm=self.inserted * 1e3,
            applied_bend_deg=float(np.rad2deg(self.current_bend)),
            bend_azimuth_deg=float(np.rad2deg(self.azimuth)),
            base_mm=(float(polyline[0][0]), float(polyline[0][1])),
            tip_mm=(float(polyline[-1][0]), float(polyline[-1][1])),
            tip_heading_deg=float(np.rad2deg(heading)),
            polyline_mm=[(float(p[0]), float(p[1])) for p in polyline],
            currents=names, total_power=0.0,
            imaging_distorted=False,
            collision=bool(collide(polyline, self.phantom).collided),
            tumor_reached=bool(tumor_reached(polyline[-1], heading, self.phantom,
                                             self.config.safety.capture_distance)),
            grasper_force=0.0, saturated=False, solver_warning=False,
        )


def step(session: SimSession, dt: float) -> Telemetry:
    return session.step(dt)


def handle_command(session: SimSession, cmd: Command) -> dict:
    return session.handle_command(cmd)


# -- scripted scenarios ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    total_ticks: int
    commands: list[dict]          # sparse {"tick": n, ...partial Command fields}
    checkpoints: list[dict]       # {"tick": n, "field": str, "value": ..., "tol": float?}
    summary_checks: dict = field(default_factory=dict)
    description: str = ""


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    telemetry: list[Telemetry]
    events: list[dict]
    summary: dict
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures


def scripted_scenario(name: str | Path) -> Scenario:
    """Load a bundled scenario by name, or any scenario JSON by path."""
    from .config import bundled_data_path
    bundled = {"fig8-navigation": "scenario_fig8_navigation.json",
               "empty": None}
    if str(name) in bundled:
        if str(name) == "empty":
            return Scenario(name="empty", total_ticks=0, commands=[], checkpoints=[])
        path = bundled_data_path(bundled[str(name)])
    else:
        path = Path(name)
        if not path.exists():
            raise ConfigError(f"unknown scenario {name!r}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if doc.get("schema") != SCENARIO_SCHEMA:
        raise ConfigError(
            f"unsupported scenario schema {doc.get('schema')!r}, expected {SCENARIO_SCHEMA!r}")
    return Scenario(
        name=doc.get("name", str(name)),
        total_ticks=int(doc["total_ticks"]),
        commands=list(doc.get("commands", [])),
        checkpoints=list(doc.get("checkpoints", [])),
        summary_checks=dict(doc.get("summary_checks", {})),
        description=doc.get("description", ""),
    )


_COMMAND_FIELDS = {
    "insert_velocity_mm_s": "insert_velocity",
    "target_bend_deg": "target_bend",
    "bend_azimuth_deg": "bend_azimuth",
    "coils_enabled": "coils_enabled",
    "grasper_current": "grasper_current",
}


def run_scenario(scenario: Scenario, config: SystemConfig | None = None,
                 phantom: PhantomMap | None = None) -> ScenarioResult:
    """Deterministic replay: telemetry every tick, checkpoints evaluated."""
    session = SimSession(config=config, phantom=phantom)
    by_tick: dict[int, dict] = {}
    for entry in scenario.commands:
        by_tick.setdefault(int(entry["tick"]), {}).update(
            {k: v for k, v in entry.items() if k != "tick"})
    telemetry = [session.snapshot()]
    draft = {"insert_velocity": 0.0, "target_bend": 0.0, "bend_azimuth": 0.0,
             "coils_enabled": True, "grasper_current": 0.0}
    seq = 0
    dt = 1.0 / session.config.safety.tick_rate
    for tick in range(scenario.total_ticks):
        if tick in by_tick:
            doc = by_tick[tick]
            for key, value in doc.items():
                if key not in _COMMAND_FIELDS:
                    raise ConfigError(f"scenario command at tick {tick}: unknown field {key!r}")
                if key.endswith("_deg"):
                    value = float(np.deg2rad(value))
                draft[_COMMAND_FIELDS[key]] = value
            seq += 1
            session.handle_command(Command(client_id="scenario", sequence_number=seq, **draft))
        telemetry.append(session.step(dt))

    failures = []
    by_index = {t.tick: t for t in telemetry}
    for cp in scenario.checkpoints:
        t = by_index.get(int(cp["tick"]))
        if t is None:
            failures.append(f"checkpoint tick {cp['tick']} outside replay")
            continue
        value = getattr(t, cp["field"])
        expect = cp["value"]
        if isinstance(expect, bool) or isinstance(value, (bool, str)):
            ok = value == expect
        else:
            ok = abs(float(value) - float(expect)) <= float(cp.get("tol", 1e-9))
        if not ok:
            failures.append(
                f"checkpoint tick {cp['tick']}: {cp['field']} = {value!r}, expected {expect!r}")

    collisions = sum(1 for t in telemetry if t.collision)
    max_power = max((t.total_power for t in telemetry), default=0.0)
    summary = {
        "name": scenario.name,
        "ticks": scenario.total_ticks,
        "tumor_reached": bool(telemetry[-1].tumor_reached) if telemetry else False,
        "collisions": collisions,
        "max_power": max_power,
        "checkpoints": len(scenario.checkpoints),
        "checkpoint_failures": len(failures),
    }
    for key, expect in scenario.summary_checks.items():
        if key == "tumor_reached" and summary["tumor_reached"] != expect:
            failures.append(f"summary: tumor_reached = {summary['tumor_reached']}")
        elif key == "collisions" and summary["collisions"] != expect:
            failures.append(f"summary: collisions = {summary['collisions']}")
        elif key == "max_power_le" and summary["max_power"] > float(expect):
            failures.append(f"summary: max_power = {summary['max_power']}")
    return ScenarioResult(telemetry=telemetry, events=list(session.events),
                          summary=summary, failures=failures)
