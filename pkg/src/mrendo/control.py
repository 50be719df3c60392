"""Tip-orientation inverse kinematics and power-optimal current allocation.

The IK solves the shooting problem over the unknown base loads (n0, m0):
forward kinematics is the shooting function and a damped least-squares
iteration minimizes

    || wR * log(R_des^T R_tip) ||^2 + || wT * m_tip ||^2
    + || wF * (n_tip - F_ext) ||^2.

The torque realized by the tip coils is T = (R m) x B0, so any requested
component along B0 is physically unreachable; the allocator projects it out
and reports it, then solves a resistance-weighted least-norm problem for
the per-coil currents (closed form when no limit is active).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coils import CoilSpec, MagneticEnvironment
from .rod import (
    DivergenceError,
    FramePose,
    InvalidParameterError,
    RodParams,
    RodState,
    integrate_forward,
    so3_log_distance,
)
from .so3 import exp_so3, log_so3

MAX_BEND = np.deg2rad(120.0)  # model validity guard
_FD_STEP = 1e-7


@dataclass(frozen=True, eq=False)
class IkProblem:
    desired_tip_rotation: np.ndarray
    rod: RodParams
    base: FramePose
    external_tip_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    weight_rotation: float = 1.0
    weight_torque: float = 1.0
    weight_force: float = 1e3

    def __post_init__(self):
        if min(self.weight_rotation, self.weight_torque, self.weight_force) <= 0.0:
            raise InvalidParameterError("IK weights must be positive")
        object.__setattr__(
            self, "external_tip_force",
            np.asarray(self.external_tip_force, dtype=float).reshape(3))


@dataclass(frozen=True, eq=False)
class IkSolution:
    rod_state: RodState
    tip_torque: np.ndarray
    base_force: np.ndarray
    base_moment: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class AllocationResult:
    """Currents realizing (the reachable part of) a requested tip torque."""

    currents: dict[str, float]
    achieved_torque: np.ndarray
    torque_residual: np.ndarray   # requested minus achieved, incl. B0 component
    total_power: float
    saturated: bool               # demand scaled down to meet limits or cap
    at_limit: bool                # some current sits at its bound


@dataclass(frozen=True, eq=False)
class SteerResult:
    ik: IkSolution
    allocation: AllocationResult
    rounds: int
    consistent: bool

    @property
    def warning(self) -> bool:
        return not self.consistent


def _levenberg_marquardt(residual_fn, x0, max_iter, stop_delta=1e-8,
                         lam0=1e-3, lam_up=2.0, lam_down=3.0):
    """Damped least-squares with forward-difference Jacobian.

    residual_fn may raise DivergenceError; trial steps that diverge are
    rejected and damping is increased.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual_fn(x)
    cost = float(np.linalg.norm(r))
    lam = lam0
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        J = np.empty((len(r), len(x)))
        for j in range(len(x)):
            xp = x.copy()
            xp[j] += _FD_STEP
            J[:, j] = (residual_fn(xp) - r) / _FD_STEP
        A = J.T @ J
        g = J.T @ r
        if np.linalg.norm(g) < 1e-16:
            break
        improved = False
        for _ in range(40):
            damp = A + lam * np.diag(np.maximum(np.diag(A), 1e-30))
            try:
                delta = np.linalg.solve(damp, -g)
            except np.linalg.LinAlgError:
                lam *= lam_up
                continue
            try:
                r_try = residual_fn(x + delta)
            except DivergenceError:
                lam *= lam_up
                continue
            cost_try = float(np.linalg.norm(r_try))
            if cost_try < cost:
                x = x + delta
                r = r_try
                delta_cost = cost - cost_try
                cost = cost_try
                lam = max(lam / lam_down, 1e-14)
                improved = True
                break
            lam *= lam_up
            if lam > 1e13:
                break
        if not improved:
            break
        if delta_cost < stop_delta or cost < 1e-14:
            break
    return x, r, cost, iterations


def _ik_scales(rod: RodParams) -> tuple[float, float]:
    ei = rod.flexural_rigidity
    return ei / rod.free_length**2, ei / rod.free_length


def solve_ik(problem: IkProblem, tol: float = 1e-2, max_iter: int = 50) -> IkSolution:
    """Shoot over base loads to hit the desired tip orientation.

    The initial guess is the constant-curvature load for the relative
    rotation, which is exact for an unloaded rod in pure bending, so the
    iteration typically converges immediately in the neutral-buoyancy case.
    Returns the best iterate even when unconverged (flag False).
    """
    if tol <= 0.0:
        raise InvalidParameterError("tol must be > 0")
    rod, base = problem.rod, problem.base
    s_n, s_m = _ik_scales(rod)
    state_cache: dict[int, RodState] = {}

    def residual(x):
        n0 = x[:3] * s_n
        m0 = x[3:] * s_m
        state = integrate_forward(base, n0, m0, rod)
        r = np.empty(9)
        r[0:3] = problem.weight_rotation * so3_log_distance(
            problem.desired_tip_rotation, state.rotations[-1])
        r[3:6] = problem.weight_torque * state.internal_moments[-1]
        r[6:9] = problem.weight_force * (
            state.internal_forces[-1] - problem.external_tip_force)
        state_cache[0] = state
        return r

    xi = log_so3(base.rotation.T @ problem.desired_tip_rotation)
    m0_guess = base.rotation @ (rod.bend_stiffness * xi / rod.free_length)
    n0_guess = problem.external_tip_force + rod.linear_density * rod.gravity * rod.free_length
    x0 = np.concatenate([n0_guess / s_n, m0_guess / s_m])

    x, r, cost, iterations = _levenberg_marquardt(residual, x0, max_iter)
    # Re-evaluate at the solution so the cached state matches x exactly.
    r = residual(x)
    cost = float(np.linalg.norm(r))
    state = state_cache[0]
    return IkSolution(
        rod_state=state,
        tip_torque=state.internal_moments[-1].copy(),
        base_force=x[:3] * s_n,
        base_moment=x[3:] * s_m,
        residual_norm=cost,
        iterations=iterations,
        converged=bool(cost <= tol),
    )


def solve_tip_load(rod: RodParams, base: FramePose, tip_force: np.ndarray,
                   tip_moment: np.ndarray, max_iter: int = 30) -> RodState:
    """Rod equilibrium under prescribed tip force and moment (dead load)."""
    tip_force = np.asarray(tip_force, dtype=float)
    tip_moment = np.asarray(tip_moment, dtype=float)
    w = rod.linear_density * rod.gravity
    if np.linalg.norm(w) == 0.0 and np.linalg.norm(tip_force) == 0.0:
        # n == 0 along the rod, so the internal moment is constant.
        return integrate_forward(base, np.zeros(3), tip_moment, rod)
    s_n, s_m = _ik_scales(rod)

    def residual(x):
        state = integrate_forward(base, x[:3] * s_n, x[3:] * s_m, rod)
        return np.concatenate([
            (state.internal_forces[-1] - tip_force) / s_n,
            (state.internal_moments[-1] - tip_moment) / s_m,
        ])

    n0 = tip_force + w * rod.free_length
    x0 = np.concatenate([n0 / s_n, tip_moment / s_m])
    x, _, _, _ = _levenberg_marquardt(residual, x0, max_iter)
    return integrate_forward(base, x[:3] * s_n, x[3:] * s_m, rod)


def _effective_torque_matrix(coils: list[CoilSpec], tip_rotation: np.ndarray,
                             env: MagneticEnvironment) -> np.ndarray:
    """Columns t_j = d(torque)/d(I_j) in the inertial frame (3 x n)."""
    cols = []
    for coil in coils:
        m_axis = tip_rotation @ (coil.moment_per_amp * coil.moment_axis)
        cols.append(np.cross(m_axis, env.b0))
    return np.array(cols).T


def _least_norm(T2: np.ndarray, resistances: np.ndarray, d2: np.ndarray,
                free: np.ndarray, fixed_currents: np.ndarray) -> np.ndarray:
    """min sum R_j I_j^2 over free currents s.t. T2 I = d2 (fixed ones held)."""
    currents = fixed_currents.copy()
    d_eff = d2 - T2[:, ~free] @ fixed_currents[~free] if (~free).any() else d2
    Tf = T2[:, free]
    winv = 1.0 / resistances[free]
    M = (Tf * winv) @ Tf.T
    lam = np.linalg.pinv(M, rcond=1e-12) @ d_eff
    currents[free] = winv * (Tf.T @ lam)
    return currents


def allocate_currents(tau_des: np.ndarray, tip_rotation: np.ndarray,
                      coils: list[CoilSpec], env: MagneticEnvironment,
                      power_cap: float | None = None) -> AllocationResult:
    """Power-optimal currents realizing the reachable part of tau_des.

    Solves  min sum_j R_j I_j^2  s.t.  sum_j t_j I_j = proj_perp(tau_des),
    |I_j| <= limit_j, total power <= power_cap.  The closed-form
    resistance-weighted least-norm solution is used when no limit is
    active; otherwise binding currents are clamped and the remainder
    re-solved (active set).  If the demand stays unreachable the least-norm
    solution is scaled down to the feasible boundary and flagged.
    """
    if not coils:
        raise InvalidParameterError("coil list must not be empty")
    if power_cap is not None and power_cap <= 0.0:
        raise InvalidParameterError("power_cap must be > 0")
    tau_des = np.asarray(tau_des, dtype=float).reshape(3)
    b_hat = env.b0_direction
    demand = tau_des - np.dot(tau_des, b_hat) * b_hat

    # Orthonormal basis of the plane perpendicular to B0.
    seed = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(seed, b_hat)) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    e1 = seed - np.dot(seed, b_hat) * b_hat
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(b_hat, e1)

    T = _effective_torque_matrix(coils, tip_rotation, env)
    T2 = np.vstack([e1 @ T, e2 @ T])
    d2 = np.array([np.dot(e1, demand), np.dot(e2, demand)])
    resistances = np.array([c.resistance for c in coils])
    limits = np.array([c.current_limit for c in coils])

    currents = _least_norm(T2, resistances, d2, np.ones(len(coils), bool),
                           np.zeros(len(coils)))
    at_limit = False
    saturated = False

    def feasible(I):
        ok_box = np.all(np.abs(I) <= limits * (1.0 + 1e-12))
        power = float(np.sum(I * I * resistances))
        ok_cap = power_cap is None or power <= power_cap * (1.0 + 1e-12)
        return ok_box and ok_cap

    if not feasible(currents):
        unconstrained = currents.copy()
        # Active set on the box constraints.
        free = np.ones(len(coils), bool)
        fixed = np.zeros(len(coils))
        solved = None
        for _ in range(len(coils)):
            trial = _least_norm(T2, resistances, d2, free, fixed)
            over = np.abs(trial) / limits
            over[~free] = 0.0
            worst = int(np.argmax(over))
            if over[worst] <= 1.0 + 1e-12:
                solved = trial
                break
            free[worst] = False
            fixed[worst] = np.sign(trial[worst]) * limits[worst]
            if not free.any():
                break
        achieved_exact = (solved is not None
                          and np.linalg.norm(T2 @ solved - d2) <= 1e-9 * (1.0 + np.linalg.norm(d2)))
        power_ok = solved is not None and (
            power_cap is None or float(np.sum(solved**2 * resistances)) <= power_cap * (1.0 + 1e-12))
        if achieved_exact and power_ok:
            currents = solved
            at_limit = True
        else:
            # Scale the least-norm direction onto the feasible boundary.
            alpha = 1.0
            nz = np.abs(unconstrained) > 0.0
            if nz.any():
                alpha = min(alpha, float(np.min(limits[nz] / np.abs(unconstrained[nz]))))
            if power_cap is not None:
                p_unc = float(np.sum(unconstrained**2 * resistances))
                if p_unc > 0.0:
                    alpha = min(alpha, float(np.sqrt(power_cap / p_unc)))
            currents = alpha * unconstrained
            saturated = True
            at_limit = True

    currents = np.clip(currents, -limits, limits)
    achieved = T @ currents
    achieved = achieved - np.dot(achieved, b_hat) * b_hat  # numerical cleanup
    total_power = float(np.sum(currents * currents * resistances))
    return AllocationResult(
        currents={c.name: float(I) for c, I in zip(coils, currents)},
        achieved_torque=achieved,
        torque_residual=tau_des - achieved,
        total_power=total_power,
        saturated=saturated,
        at_limit=at_limit,
    )


def bend_rotation(base: FramePose, bend: float, azimuth: float) -> np.ndarray:
    """Tip orientation target: bend about a body axis selected by azimuth.

    Azimuth 0 bends in the plane containing the base tangent and B0 (the
    imaging slice for a perpendicular entry); pi flips the direction.
    """
    axis_local = np.array([np.sin(azimuth), -np.cos(azimuth), 0.0])
    return base.rotation @ exp_so3(bend * axis_local)


def steer_to(bend: float, azimuth: float, rod: RodParams, coils: list[CoilSpec],
             env: MagneticEnvironment, base: FramePose,
             power_cap: float | None = None, max_rounds: int = 20,
             ik_tol: float = 1e-2, torque_tol: float = 1e-6) -> SteerResult:
    """Steer the tip to a bend target and allocate coil currents for it.

    The coil torque is evaluated with the coil axes at their rest (control
    frame) orientation and applied to the rod as a dead tip load.  IK and
    allocation are alternated until the allocated torque agrees with the
    rod's tip moment within `torque_tol`; when limits or the power cap
    saturate the allocation, the target is relaxed to the orientation
    reachable under the achievable torque.
    """
    if abs(bend) > MAX_BEND + 1e-12:
        raise InvalidParameterError(
            f"bend target {np.rad2deg(bend):.1f} deg exceeds the "
            f"{np.rad2deg(MAX_BEND):.0f} deg model validity guard")
    target = bend_rotation(base, bend, azimuth)
    rest_orientation = base.rotation
    sol = None
    alloc = None
    consistent = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        problem = IkProblem(desired_tip_rotation=target, rod=rod, base=base)
        sol = solve_ik(problem, tol=ik_tol)
        alloc = allocate_currents(sol.tip_torque, rest_orientation, coils, env,
                                  power_cap=power_cap)
        gap = float(np.linalg.norm(alloc.achieved_torque - sol.tip_torque))
        if gap <= torque_tol:
            consistent = True
            break
        # Relax the target to what the achievable torque actually produces.
        reachable = solve_tip_load(rod, base, np.zeros(3), alloc.achieved_torque)
        target = reachable.rotations[-1]
    return SteerResult(ik=sol, allocation=alloc, rounds=rounds, consistent=consistent)
