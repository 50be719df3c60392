"""Static Cosserat rod model of the endoscope's steerable section.

State along arc length s is (p, R, n, m): position, orientation, internal
force, internal moment.  The governing ODEs are

    p' = R v,   R' = R skew(u),   n' = -(rho_lin) g,   m' = -p' x n

with the compliance-form closures

    v = z_hat + K1^{-1} R^T n,    u = K2^{-1} R^T m,

K1 = diag(GA, GA, EA), K2 = diag(EI, EI, GJ).  Integration is fixed-step
RK4 with polar re-orthonormalization of R after every step.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .so3 import is_rotation, log_so3, polar_orthonormalize

Z_HAT = np.array([0.0, 0.0, 1.0])


class InvalidParameterError(ValueError):
    """Raised for non-physical rod or coil parameters."""


class DivergenceError(RuntimeError):
    """Raised when forward integration produces non-finite values."""

    def __init__(self, arc_coordinate: float):
        self.arc_coordinate = arc_coordinate
        super().__init__(
            f"rod integration diverged near s = {arc_coordinate:.6g} m"
        )


@dataclass(frozen=True, eq=False)
class RodParams:
    """Geometry and material constants of the steerable section (SI units).

    `linear_density` is mass per unit arc length (kg/m), i.e. the volumetric
    density already multiplied by the cross-section area.  `gravity` is the
    effective acceleration net of buoyancy; the default (zero) models the
    neutrally buoyant water-bath condition.
    """

    elastic_modulus: float
    shear_modulus: float
    area: float
    area_moment: float
    polar_moment: float
    free_length: float
    segment_count: int = 100
    linear_density: float = 0.011
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("elastic_modulus", "shear_modulus", "area",
                     "area_moment", "polar_moment", "free_length"):
            if not getattr(self, name) > 0.0:
                raise InvalidParameterError(f"{name} must be > 0")
        if self.segment_count < 2:
            raise InvalidParameterError("segment_count must be >= 2")
        g = np.asarray(self.gravity, dtype=float).reshape(3)
        object.__setattr__(self, "gravity", g)

    @property
    def flexural_rigidity(self) -> float:
        """EI, the bending stiffness (N m^2)."""
        return self.elastic_modulus * self.area_moment

    @property
    def stretch_stiffness(self) -> np.ndarray:
        """K1 diagonal (GA, GA, EA)."""
        ga = self.shear_modulus * self.area
        return np.array([ga, ga, self.elastic_modulus * self.area])

    @property
    def bend_stiffness(self) -> np.ndarray:
        """K2 diagonal (EI, EI, GJ)."""
        ei = self.flexural_rigidity
        return np.array([ei, ei, self.shear_modulus * self.polar_moment])

    def with_free_length(self, L: float, segment_count: int | None = None) -> "RodParams":
        return replace(self, free_length=L,
                       segment_count=segment_count or self.segment_count)


def rod_params_from_rigidity(flexural_rigidity: float,
                             free_length: float,
                             tube_diameter: float = 3.5e-3,
                             poisson_ratio: float = 0.4,
                             segment_count: int = 100,
                             linear_density: float = 0.011,
                             gravity=(0.0, 0.0, 0.0)) -> RodParams:
    """Build RodParams anchored on a measured flexural rigidity.

    Only EI is experimentally characterized; E and I_A are derived from a
    solid circular section of the given diameter so that E * I_A equals the
    measured rigidity exactly.  G defaults to E / (2 (1 + nu)) with the
    thermoplastic-polyurethane Poisson ratio 0.4.
    """
    r = tube_diameter / 2.0
    area_moment = np.pi * r**4 / 4.0
    elastic = flexural_rigidity / area_moment
    shear = elastic / (2.0 * (1.0 + poisson_ratio))
    return RodParams(
        elastic_modulus=elastic,
        shear_modulus=shear,
        area=np.pi * r**2,
        area_moment=area_moment,
        polar_moment=2.0 * area_moment,
        free_length=free_length,
        segment_count=segment_count,
        linear_density=linear_density,
        gravity=np.asarray(gravity, dtype=float),
    )


@dataclass(frozen=True, eq=False)
class FramePose:
    """A coordinate frame in the scanner's inertial frame."""

    origin: np.ndarray
    rotation: np.ndarray
    label: str = "control"

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not is_rotation(R):
            raise InvalidParameterError("frame rotation is not orthonormal")
        object.__setattr__(self, "rotation", R)

    @property
    def tangent(self) -> np.ndarray:
        """Local +z axis in inertial coordinates."""
        return self.rotation[:, 2]


@dataclass(frozen=True, eq=False)
class SegmentState:
    position: np.ndarray
    rotation: np.ndarray
    internal_force: np.ndarray
    internal_moment: np.ndarray


@dataclass(frozen=True, eq=False)
class RodState:
    """Discretized rod: segment_count + 1 states at uniform arc coordinates."""

    arc_coordinates: np.ndarray          # (N+1,)
    positions: np.ndarray                # (N+1, 3)
    rotations: np.ndarray                # (N+1, 3, 3)
    internal_forces: np.ndarray          # (N+1, 3)
    internal_moments: np.ndarray         # (N+1, 3)

    def __len__(self) -> int:
        return len(self.arc_coordinates)

    def segment(self, i: int) -> SegmentState:
        return SegmentState(self.positions[i], self.rotations[i],
                            self.internal_forces[i], self.internal_moments[i])

    @property
    def segments(self) -> list[SegmentState]:
        return [self.segment(i) for i in range(len(self))]

    @property
    def tip_pose(self) -> FramePose:
        return FramePose(self.positions[-1], self.rotations[-1], label="tip")

    @property
    def tip_moment(self) -> np.ndarray:
        return self.internal_moments[-1]

    @property
    def tip_force(self) -> np.ndarray:
        return self.internal_forces[-1]

    def bend_angle(self, base: FramePose) -> float:
        """Angle between tip tangent and base tangent (rad)."""
        c = float(np.dot(self.rotations[-1][:, 2], base.tangent))
        return float(np.arccos(min(1.0, max(-1.0, c))))


def rod_rhs(state: SegmentState, params: RodParams):
    """State derivative (p', R', n', m') of the static Cosserat ODEs."""
    k1 = params.stretch_stiffness
    k2 = params.bend_stiffness
    if np.any(k1 <= 0.0) or np.any(k2 <= 0.0):
        raise InvalidParameterError("stiffness matrices must be positive definite")
    R = state.rotation
    n = state.internal_force
    m = state.internal_moment
    v = Z_HAT + (R.T @ n) / k1
    u = (R.T @ m) / k2
    p_dot = R @ v
    R_dot = R @ np.array([
        [0.0, -u[2], u[1]],
        [u[2], 0.0, -u[0]],
        [-u[1], u[0], 0.0],
    ])
    n_dot = -params.linear_density * params.gravity
    m_dot = -np.cross(p_dot, n)
    return p_dot, R_dot, n_dot, m_dot


@njit(cache=True)
def _rhs_flat(y, k1inv, k2inv, w, out):  # pragma: no cover - jitted
    # y layout: p[0:3], R[3:12] row-major, n[12:15], m[15:18]
    rtn0 = y[3] * y[12] + y[6] * y[13] + y[9] * y[14]
    rtn1 = y[4] * y[12] + y[7] * y[13] + y[10] * y[14]
    rtn2 = y[5] * y[12] + y[8] * y[13] + y[11] * y[14]
    rtm0 = y[3] * y[15] + y[6] * y[16] + y[9] * y[17]
    rtm1 = y[4] * y[15] + y[7] * y[16] + y[10] * y[17]
    rtm2 = y[5] * y[15] + y[8] * y[16] + y[11] * y[17]
    v0 = k1inv[0] * rtn0
    v1 = k1inv[1] * rtn1
    v2 = 1.0 + k1inv[2] * rtn2
    u0 = k2inv[0] * rtm0
    u1 = k2inv[1] * rtm1
    u2 = k2inv[2] * rtm2
    # p' = R v
    out[0] = y[3] * v0 + y[4] * v1 + y[5] * v2
    out[1] = y[6] * v0 + y[7] * v1 + y[8] * v2
    out[2] = y[9] * v0 + y[10] * v1 + y[11] * v2
    # R' = R skew(u); skew rows: (0,-u2,u1), (u2,0,-u0), (-u1,u0,0)
    out[3] = y[4] * u2 - y[5] * u1
    out[4] = -y[3] * u2 + y[5] * u0
    out[5] = y[3] * u1 - y[4] * u0
    out[6] = y[7] * u2 - y[8] * u1
    out[7] = -y[6] * u2 + y[8] * u0
    out[8] = y[6] * u1 - y[7] * u0
    out[9] = y[10] * u2 - y[11] * u1
    out[10] = -y[9] * u2 + y[11] * u0
    out[11] = y[9] * u1 - y[10] * u0
    # n' = -w
    out[12] = -w[0]
    out[13] = -w[1]
    out[14] = -w[2]
    # m' = -p' x n
    out[15] = -(out[1] * y[14] - out[2] * y[13])
    out[16] = -(out[2] * y[12] - out[0] * y[14])
    out[17] = -(out[0] * y[13] - out[1] * y[12])


@njit(cache=True)
def _orthonormalize_flat(y):  # pragma: no cover - jitted
    # Two Newton-Schulz sweeps onto the polar factor of the R block.
    for _ in range(2):
        a00 = y[3]; a01 = y[4]; a02 = y[5]
        a10 = y[6]; a11 = y[7]; a12 = y[8]
        a20 = y[9]; a21 = y[10]; a22 = y[11]
        # G = R^T R
        g00 = a00 * a00 + a10 * a10 + a20 * a20
        g01 = a00 * a01 + a10 * a11 + a20 * a21
        g02 = a00 * a02 + a10 * a12 + a20 * a22
        g11 = a01 * a01 + a11 * a11 + a21 * a21
        g12 = a01 * a02 + a11 * a12 + a21 * a22
        g22 = a02 * a02 + a12 * a12 + a22 * a22
        # B = 1.5 I - 0.5 G
        b00 = 1.5 - 0.5 * g00
        b01 = -0.5 * g01
        b02 = -0.5 * g02
        b11 = 1.5 - 0.5 * g11
        b12 = -0.5 * g12
        b22 = 1.5 - 0.5 * g22
        y[3] = a00 * b00 + a01 * b01 + a02 * b02
        y[4] = a00 * b01 + a01 * b11 + a02 * b12
        y[5] = a00 * b02 + a01 * b12 + a02 * b22
        y[6] = a10 * b00 + a11 * b01 + a12 * b02
        y[7] = a10 * b01 + a11 * b11 + a12 * b12
        y[8] = a10 * b02 + a11 * b12 + a12 * b22
        y[9] = a20 * b00 + a21 * b01 + a22 * b02
        y[10] = a20 * b01 + a21 * b11 + a22 * b12
        y[11] = a20 * b02 + a21 * b12 + a22 * b22


@njit(cache=True)
def _rk4_integrate(y0, h, n_steps, k1inv, k2inv, w):  # pragma: no cover - jitted
    out = np.empty((n_steps + 1, 18))
    out[0] = y0
    y = y0.copy()
    k1 = np.empty(18)
    k2 = np.empty(18)
    k3 = np.empty(18)
    k4 = np.empty(18)
    tmp = np.empty(18)
    fail = -1
    for step in range(n_steps):
        _rhs_flat(y, k1inv, k2inv, w, k1)
        for i in range(18):
            tmp[i] = y[i] + 0.5 * h * k1[i]
        _rhs_flat(tmp, k1inv, k2inv, w, k2)
        for i in range(18):
            tmp[i] = y[i] + 0.5 * h * k2[i]
        _rhs_flat(tmp, k1inv, k2inv, w, k3)
        for i in range(18):
            tmp[i] = y[i] + h * k3[i]
        _rhs_flat(tmp, k1inv, k2inv, w, k4)
        for i in range(18):
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        _orthonormalize_flat(y)
        ok = True
        for i in range(18):
            if not np.isfinite(y[i]):
                ok = False
        if not ok:
            fail = step
            break
        out[step + 1] = y
    return out, fail


def integrate_forward(base: FramePose, n0: np.ndarray, m0: np.ndarray,
                      params: RodParams) -> RodState:
    """Forward kinematics: integrate the rod ODEs from the base frame.

    Raises DivergenceError (with the offending arc coordinate) if the state
    leaves the representable range.
    """
    n_steps = params.segment_count
    h = params.free_length / n_steps
    y0 = np.empty(18)
    y0[0:3] = base.origin
    y0[3:12] = base.rotation.reshape(9)
    y0[12:15] = np.asarray(n0, dtype=float)
    y0[15:18] = np.asarray(m0, dtype=float)
    w = params.linear_density * params.gravity
    traj, fail = _rk4_integrate(
        y0, h, n_steps,
        1.0 / params.stretch_stiffness,
        1.0 / params.bend_stiffness,
        w,
    )
    if fail >= 0:
        raise DivergenceError(arc_coordinate=(fail + 1) * h)
    s = np.arange(n_steps + 1) * h
    return RodState(
        arc_coordinates=s,
        positions=traj[:, 0:3].copy(),
        rotations=traj[:, 3:12].reshape(-1, 3, 3).copy(),
        internal_forces=traj[:, 12:15].copy(),
        internal_moments=traj[:, 15:18].copy(),
    )


def rk4_step_reference(state: SegmentState, params: RodParams, h: float) -> SegmentState:
    """One RK4 step composed from rod_rhs, for cross-checking the fast kernel."""
    def pack(st):
        return st.position, st.rotation, st.internal_force, st.internal_moment

    def advance(st, dt, deriv):
        return SegmentState(
            st.position + dt * deriv[0],
            st.rotation + dt * deriv[1],
            st.internal_force + dt * deriv[2],
            st.internal_moment + dt * deriv[3],
        )

    k1 = rod_rhs(state, params)
    k2 = rod_rhs(advance(state, h / 2, k1), params)
    k3 = rod_rhs(advance(state, h / 2, k2), params)
    k4 = rod_rhs(advance(state, h, k3), params)
    p, R, n, m = pack(state)
    new = SegmentState(
        p + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        polar_orthonormalize(R + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])),
        n + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
        m + h / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]),
    )
    return new


def so3_log_distance(Ra: np.ndarray, Rb: np.ndarray) -> np.ndarray:
    """Axis-angle vector of the relative rotation Ra^T Rb.

    Zero iff Ra == Rb; the norm never exceeds pi.  Used as the orientation
    mismatch metric in the tip-targeting objective.
    """
    if not (is_rotation(Ra) and is_rotation(Rb)):
        raise InvalidParameterError("so3_log_distance requires orthonormal inputs")
    return log_so3(Ra.T @ Rb)


def _quaternion_wxyz(R: np.ndarray) -> np.ndarray:
    # Shepperd's method, stable for all rotation matrices.
    t = np.trace(R)
    if t > 0.0:
        r = np.sqrt(1.0 + t)
        w = 0.5 * r
        x = (R[2, 1] - R[1, 2]) / (2.0 * r)
        y = (R[0, 2] - R[2, 0]) / (2.0 * r)
        z = (R[1, 0] - R[0, 1]) / (2.0 * r)
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        r = np.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        q = np.empty(3)
        q[i] = 0.5 * r
        q[j] = (R[j, i] + R[i, j]) / (2.0 * r)
        q[k] = (R[k, i] + R[i, k]) / (2.0 * r)
        w = (R[k, j] - R[j, k]) / (2.0 * r)
        x, y, z = q
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    return np.array([w, x, y, z])


CSV_VERSION = "rodstate/1"


def rod_state_to_csv(state: RodState) -> str:
    """Delimited export: one row per segment, orientation as wxyz quaternion."""
    buf = io.StringIO()
    buf.write(f"# format: {CSV_VERSION}\n")
    buf.write("s,px,py,pz,qw,qx,qy,qz,nx,ny,nz,mx,my,mz\n")
    for i in range(len(state)):
        q = _quaternion_wxyz(state.rotations[i])
        row = [state.arc_coordinates[i], *state.positions[i], *q,
               *state.internal_forces[i], *state.internal_moments[i]]
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()
