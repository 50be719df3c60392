"""Microcoil actuation models: magnetic moment, Lorentz torque, Joule power.

Coil kinds:

* axial   - solenoid around the tube axis, moment along local z.
* saddle  - curved rectangular coil on the tube surface, moment normal to
            the tube axis.  Two orthogonal saddle pairs on one
            circumferential plane form the quad coil.
* grasper - flat rectangular coil on the grasper flap.

Every kind is modeled as N identical loops: per-turn effective area times
turn count gives the moment per ampere, per-turn perimeter times turn count
gives the wire length for resistance.  Winding feasibility of nested turns
is still validated for the grasper so that impossible geometries are
rejected with the offending turn index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rod import InvalidParameterError

COPPER_RESISTIVITY = 1.68e-8  # ohm m at 20 C


class GeometryError(InvalidParameterError):
    """Raised when a winding cannot physically fit its stated geometry."""


@dataclass(frozen=True, eq=False)
class MagneticEnvironment:
    """Static scanner field; default 7 T along inertial +z."""

    b0: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 7.0]))

    def __post_init__(self):
        b = np.asarray(self.b0, dtype=float).reshape(3)
        if np.linalg.norm(b) <= 0.0:
            raise InvalidParameterError("B0 must be nonzero")
        object.__setattr__(self, "b0", b)

    @property
    def b0_magnitude(self) -> float:
        return float(np.linalg.norm(self.b0))

    @property
    def b0_direction(self) -> np.ndarray:
        return self.b0 / self.b0_magnitude


@dataclass(frozen=True)
class WireSpec:
    """Winding wire cross-section; `flat` ribbon or `round` magnet wire."""

    shape: str = "flat"
    width: float = 40e-6        # flat only
    thickness: float = 18e-6    # flat only
    diameter: float = 80e-6     # round only
    gap: float = 40e-6          # spacing between adjacent turns
    resistivity: float = COPPER_RESISTIVITY

    def __post_init__(self):
        if self.shape not in ("flat", "round"):
            raise InvalidParameterError(f"unknown wire shape {self.shape!r}")
        dims = (self.width, self.thickness) if self.shape == "flat" else (self.diameter,)
        if any(d <= 0.0 for d in dims) or self.gap < 0.0 or self.resistivity <= 0.0:
            raise InvalidParameterError("wire dimensions must be positive")

    @property
    def cross_section(self) -> float:
        if self.shape == "flat":
            return self.width * self.thickness
        return np.pi * (self.diameter / 2.0) ** 2

    @property
    def pitch(self) -> float:
        """Center-to-center spacing of adjacent turns in one layer."""
        extent = self.width if self.shape == "flat" else self.diameter
        return extent + self.gap


@dataclass(frozen=True, eq=False)
class CoilSpec:
    """One microcoil: winding geometry, turn count, wire, moment axis.

    Geometry fields by kind (meters):
      axial:   tube_diameter, coil_length, layers
      saddle:  tube_diameter, width, length, arc_angle (rad), core_width
      grasper: width, length, core_width
    `moment_axis` is a unit vector in the tip body frame.  `resistance`
    overrides the geometric estimate when the real part was measured.
    """

    name: str
    kind: str
    turns: int
    wire: WireSpec
    moment_axis: np.ndarray
    current_limit: float = 0.3
    tube_diameter: float = 3.5e-3
    coil_length: float = 10e-3
    layers: int = 1
    width: float = 0.0
    length: float = 0.0
    arc_angle: float = np.pi
    core_width: float = 0.0
    resistance_override: float | None = None

    def __post_init__(self):
        if self.kind not in ("axial", "saddle", "grasper"):
            raise InvalidParameterError(f"unknown coil kind {self.kind!r}")
        if self.turns < 1:
            raise InvalidParameterError("coil must have at least one turn")
        if self.current_limit <= 0.0:
            raise InvalidParameterError("current limit must be > 0")
        axis = np.asarray(self.moment_axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if not np.isclose(norm, 1.0, atol=1e-9):
            raise InvalidParameterError("moment_axis must be a unit vector")
        object.__setattr__(self, "moment_axis", axis / norm)
        if self.kind == "axial" and self.tube_diameter <= 0.0:
            raise InvalidParameterError("axial coil needs a positive tube diameter")
        if self.kind == "saddle" and (self.length <= 0.0 or self.tube_diameter <= 0.0
                                      or not 0.0 < self.arc_angle <= 2.0 * np.pi):
            raise InvalidParameterError("saddle coil needs positive length and arc angle")
        if self.kind == "grasper":
            if self.width <= 0.0 or self.length <= 0.0:
                raise InvalidParameterError("grasper coil needs positive width and length")
            p = self.wire.pitch
            for k in range(self.turns):
                if self.width - 2.0 * k * p <= 0.0 or self.length - 2.0 * k * p <= 0.0:
                    raise GeometryError(
                        f"grasper turn {k} does not fit: inner dimension <= 0 "
                        f"(outer {self.width:.3g} x {self.length:.3g} m, pitch {p:.3g} m)"
                    )

    @property
    def turn_area(self) -> float:
        """Effective loop area of one turn (m^2)."""
        if self.kind == "axial":
            return np.pi * (self.tube_diameter / 2.0) ** 2
        if self.kind == "saddle":
            chord = self.tube_diameter * np.sin(self.arc_angle / 2.0)
            return chord * self.length
        return self.width * self.length

    @property
    def turn_perimeter(self) -> float:
        """Wire length of one turn (m)."""
        if self.kind == "axial":
            return np.pi * self.tube_diameter
        if self.kind == "saddle":
            arc = (self.tube_diameter / 2.0) * self.arc_angle
            return 2.0 * (arc + self.length)
        return 2.0 * (self.width + self.length)

    @property
    def moment_per_amp(self) -> float:
        """|m| / I = N * A_turn (m^2)."""
        return self.turns * self.turn_area

    @property
    def resistance(self) -> float:
        if self.resistance_override is not None:
            return self.resistance_override
        return coil_resistance(self)


@dataclass(frozen=True)
class ActuationCommand:
    """Per-coil currents (A), keyed by coil name."""

    currents: dict[str, float]
    timestamp: float = 0.0


def validate_command(cmd: ActuationCommand, coils: list[CoilSpec]) -> None:
    by_name = {c.name: c for c in coils}
    for name, current in cmd.currents.items():
        coil = by_name.get(name)
        if coil is None:
            raise InvalidParameterError(f"unknown coil {name!r}")
        if abs(current) > coil.current_limit + 1e-12:
            raise InvalidParameterError(
                f"current {current:.4g} A exceeds limit {coil.current_limit:.4g} A on {name}"
            )


def wire_lorentz_force(current: float, wire_vector, env: MagneticEnvironment) -> np.ndarray:
    """F = i L x B0 on a straight current-carrying wire."""
    return current * np.cross(np.asarray(wire_vector, dtype=float), env.b0)


def coil_moment(coil: CoilSpec, current: float) -> np.ndarray:
    """Magnetic moment vector (A m^2) in the tip body frame."""
    return coil.moment_per_amp * current * coil.moment_axis


def lorentz_torque(moments, tip_rotation: np.ndarray,
                   env: MagneticEnvironment) -> np.ndarray:
    """Torque (N m, inertial frame) of body-frame moments: T = (R sum(m)) x B0.

    Always orthogonal to B0 by construction.
    """
    total = np.zeros(3)
    for m in moments:
        total = total + np.asarray(m, dtype=float)
    return np.cross(tip_rotation @ total, env.b0)


def coil_resistance(coil: CoilSpec) -> float:
    """DC resistance from total wire length over cross-section."""
    area = coil.wire.cross_section
    if area <= 0.0:
        raise InvalidParameterError("wire cross-section must be positive")
    length = coil.turns * coil.turn_perimeter
    return coil.wire.resistivity * length / area


def joule_power(cmd: ActuationCommand, coils: list[CoilSpec]) -> tuple[float, dict[str, float]]:
    """Total and per-coil dissipation P_j = I_j^2 R_j."""
    per_coil = {}
    for coil in coils:
        current = cmd.currents.get(coil.name, 0.0)
        per_coil[coil.name] = current * current * coil.resistance
    return sum(per_coil.values()), per_coil


def steering_coils(coils: list[CoilSpec]) -> list[CoilSpec]:
    return [c for c in coils if c.kind != "grasper"]


def grasper_coil(coils: list[CoilSpec]) -> CoilSpec | None:
    for c in coils:
        if c.kind == "grasper":
            return c
    return None
