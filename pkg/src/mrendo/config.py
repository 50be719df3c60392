"""JSON system configuration: rod, coils, field, safety caps.

One self-describing document (schema "endoscope-config/1") feeds every
entry point.  The bundled ``table1.json`` reproduces the physical
prototype: 7 T field, 2 cm steerable section anchored to the measured
4.45e-5 N m^2 flexural rigidity, a 250-turn axial coil, two 7-turn saddle
pairs, and the 20-turn grasper coil.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .coils import CoilSpec, MagneticEnvironment, WireSpec
from .rod import FramePose, RodParams, rod_params_from_rigidity

CONFIG_SCHEMA = "endoscope-config/1"


class ConfigError(ValueError):
    """Raised when a configuration document violates its schema."""


@dataclass(frozen=True)
class SafetyLimits:
    power_cap: float = 1.2            # W, total dissipation
    slew_rate: float = np.deg2rad(30.0)   # rad/s commanded-bend ramp
    max_bend: float = np.deg2rad(120.0)   # rad model validity guard
    tick_rate: float = 50.0           # Hz simulation
    publish_rate: float = 10.0        # Hz telemetry fan-out
    capture_distance: float = 2.0     # mm tumor-contact margin


@dataclass(frozen=True, eq=False)
class SystemConfig:
    rod: RodParams
    environment: MagneticEnvironment
    coils: list[CoilSpec]
    safety: SafetyLimits
    entry_heading: float = np.pi / 2  # rad between entry tangent and B0
    source: str = "<builtin>"

    def coil(self, name: str) -> CoilSpec:
        for c in self.coils:
            if c.name == name:
                return c
        raise KeyError(name)


def control_frame(heading: float = np.pi / 2, origin=(0.0, 0.0, 0.0)) -> FramePose:
    """Base frame with the tangent at `heading` radians from B0.

    The imaging slice is the inertial x-z plane (B0 along +z); the slice
    normal is +y and becomes the local +y axis, so azimuth-0 bends stay in
    the slice.
    """
    tangent = np.array([np.sin(heading), 0.0, np.cos(heading)])
    y_local = np.array([0.0, 1.0, 0.0])
    x_local = np.cross(y_local, tangent)
    R = np.column_stack([x_local, y_local, tangent])
    return FramePose(origin=np.asarray(origin, dtype=float), rotation=R, label="control")


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required field {key!r}")
    return mapping[key]


def _parse_wire(doc: dict, context: str) -> WireSpec:
    try:
        return WireSpec(
            shape=doc.get("shape", "flat"),
            width=float(doc.get("width", 40e-6)),
            thickness=float(doc.get("thickness", 18e-6)),
            diameter=float(doc.get("diameter", 80e-6)),
            gap=float(doc.get("gap", 40e-6)),
            resistivity=float(doc.get("resistivity", 1.68e-8)),
        )
    except ValueError as exc:
        raise ConfigError(f"{context}.wire: {exc}") from exc


def _parse_coil(doc: dict, index: int) -> CoilSpec:
    context = f"coils[{index}]"
    kind = _require(doc, "kind", context)
    name = doc.get("name", kind)
    arc_angle = np.deg2rad(float(doc.get("arc_angle_deg", 180.0)))
    try:
        return CoilSpec(
            name=name,
            kind=kind,
            turns=int(_require(doc, "turns", context)),
            wire=_parse_wire(doc.get("wire", {}), context),
            moment_axis=np.asarray(_require(doc, "moment_axis", context), dtype=float),
            current_limit=float(doc.get("current_limit", 0.3)),
            tube_diameter=float(doc.get("tube_diameter", 3.5e-3)),
            coil_length=float(doc.get("coil_length", 10e-3)),
            layers=int(doc.get("layers", 1)),
            width=float(doc.get("width", 0.0)),
            length=float(doc.get("length", 0.0)),
            arc_angle=arc_angle,
            core_width=float(doc.get("core_width", 0.0)),
            resistance_override=(float(doc["resistance"]) if "resistance" in doc else None),
        )
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def _parse_rod(doc: dict) -> RodParams:
    common = dict(
        free_length=float(_require(doc, "free_length", "rod")),
        segment_count=int(doc.get("segment_count", 100)),
        linear_density=float(doc.get("linear_density", 0.011)),
        gravity=np.asarray(doc.get("gravity", [0.0, 0.0, 0.0]), dtype=float),
    )
    try:
        if "elastic_modulus" in doc:
            return RodParams(
                elastic_modulus=float(doc["elastic_modulus"]),
                shear_modulus=float(_require(doc, "shear_modulus", "rod")),
                area=float(_require(doc, "area", "rod")),
                area_moment=float(_require(doc, "area_moment", "rod")),
                polar_moment=float(_require(doc, "polar_moment", "rod")),
                **common,
            )
        return rod_params_from_rigidity(
            flexural_rigidity=float(_require(doc, "flexural_rigidity", "rod")),
            tube_diameter=float(doc.get("tube_diameter", 3.5e-3)),
            poisson_ratio=float(doc.get("poisson_ratio", 0.4)),
            **common,
        )
    except ValueError as exc:
        raise ConfigError(f"rod: {exc}") from exc


def parse_config(doc: dict, source: str = "<dict>") -> SystemConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    schema = doc.get("schema")
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {schema!r}, expected {CONFIG_SCHEMA!r}")
    rod = _parse_rod(_require(doc, "rod", "config"))
    env_doc = doc.get("environment", {})
    try:
        env = MagneticEnvironment(b0=np.asarray(env_doc.get("b0", [0.0, 0.0, 7.0]), dtype=float))
    except ValueError as exc:
        raise ConfigError(f"environment: {exc}") from exc
    coil_docs = _require(doc, "coils", "config")
    if not isinstance(coil_docs, list) or not coil_docs:
        raise ConfigError("coils: must be a non-empty list")
    coils = [_parse_coil(c, i) for i, c in enumerate(coil_docs)]
    names = [c.name for c in coils]
    if len(set(names)) != len(names):
        raise ConfigError("coils: names must be unique")
    s = doc.get("safety", {})
    safety = SafetyLimits(
        power_cap=float(s.get("power_cap", 1.2)),
        slew_rate=np.deg2rad(float(s.get("slew_rate_deg_s", 30.0))),
        max_bend=np.deg2rad(float(s.get("max_bend_deg", 120.0))),
        tick_rate=float(s.get("tick_rate", 50.0)),
        publish_rate=float(s.get("publish_rate", 10.0)),
        capture_distance=float(s.get("capture_distance_mm", 2.0)),
    )
    if safety.power_cap <= 0 or safety.tick_rate <= 0:
        raise ConfigError("safety: power_cap and tick_rate must be > 0")
    heading = np.deg2rad(float(doc.get("entry", {}).get("heading_deg", 90.0)))
    return SystemConfig(rod=rod, environment=env, coils=coils, safety=safety,
                        entry_heading=heading, source=source)


def load_config(path: str | Path | None = None) -> SystemConfig:
    """Load a config file; None loads the bundled Table-I prototype."""
    if path is None:
        text = resources.files("mrendo.data").joinpath("table1.json").read_text()
        return parse_config(json.loads(text), source="builtin:table1")
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    return parse_config(doc, source=str(p))


def bundled_data_path(name: str) -> Path:
    with resources.as_file(resources.files("mrendo.data").joinpath(name)) as p:
        return Path(p)
