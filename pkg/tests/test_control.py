import numpy as np
import pytest

from mrendo import (
    IkProblem,
    InvalidParameterError,
    allocate_currents,
    integrate_forward,
    so3_log_distance,
    solve_ik,
    steer_to,
)
from mrendo.coils import steering_coils
from mrendo.config import control_frame
from mrendo.control import bend_rotation, solve_tip_load
from conftest import random_rotation

EI = 4.45e-5


@pytest.fixture(scope="module")
def rig(table1):
    base = control_frame()
    return table1, base, steering_coils(table1.coils)


# -- inverse kinematics ---------------------------------------------------------

def test_identity_target_gives_zero_torque(rig):
    cfg, base, _ = rig
    sol = solve_ik(IkProblem(desired_tip_rotation=base.rotation,
                             rod=cfg.rod, base=base))
    assert sol.converged
    assert np.linalg.norm(sol.tip_torque) < 1e-9
    straight = base.origin + cfg.rod.free_length * base.tangent
    assert np.allclose(sol.rod_state.positions[-1], straight, atol=1e-9)


def test_ninety_degree_torque_matches_analytic(rig):
    # constant-curvature oracle: |tau| = theta * EI / L
    cfg, base, _ = rig
    rod = cfg.rod.with_free_length(0.03)
    target = bend_rotation(base, np.pi / 2, 0.0)
    sol = solve_ik(IkProblem(desired_tip_rotation=target, rod=rod, base=base))
    expected = (np.pi / 2) * EI / 0.03
    assert abs(expected - 2.33e-3) / 2.33e-3 < 0.005
    assert abs(np.linalg.norm(sol.tip_torque) - expected) / expected < 0.02
    assert sol.converged


def test_mirror_targets_are_symmetric(rig):
    cfg, base, _ = rig
    up = solve_ik(IkProblem(bend_rotation(base, 0.7, 0.0), cfg.rod, base))
    down = solve_ik(IkProblem(bend_rotation(base, -0.7, 0.0), cfg.rod, base))
    assert abs(np.linalg.norm(up.tip_torque) - np.linalg.norm(down.tip_torque)) < 1e-6


def test_ik_honors_external_tip_force(rig):
    cfg, base, _ = rig
    f_ext = np.array([0.0, 0.0, -5e-3])
    sol = solve_ik(IkProblem(bend_rotation(base, 0.5, 0.0), cfg.rod, base,
                             external_tip_force=f_ext))
    assert sol.converged
    assert np.linalg.norm(sol.rod_state.internal_forces[-1] - f_ext) < 1e-5
    err = so3_log_distance(bend_rotation(base, 0.5, 0.0),
                           sol.rod_state.rotations[-1])
    assert np.linalg.norm(err) < 1e-3


def test_fd_jacobian_step_size_robustness(rig):
    # The solver's Jacobian is forward-difference; central differences at
    # several scaled steps must agree to 1e-4 relative.
    cfg, base, _ = rig
    rod = cfg.rod
    s_n = EI / rod.free_length**2
    s_m = EI / rod.free_length
    target = bend_rotation(base, 0.6, 0.3)

    def residual(x):
        state = integrate_forward(base, x[:3] * s_n, x[3:] * s_m, rod)
        return np.concatenate([
            so3_log_distance(target, state.rotations[-1]),
            state.internal_moments[-1],
            1e3 * state.internal_forces[-1],
        ])

    rng = np.random.default_rng(4)
    for _ in range(3):
        x = rng.standard_normal(6) * 0.3
        jacobians = []
        for h in (1e-6, 1e-7, 1e-8):
            J = np.empty((9, 6))
            for j in range(6):
                xp, xm = x.copy(), x.copy()
                xp[j] += h
                xm[j] -= h
                J[:, j] = (residual(xp) - residual(xm)) / (2 * h)
            jacobians.append(J)
        scale = max(np.abs(jacobians[0]).max(), 1e-12)
        fwd = np.empty((9, 6))
        r0 = residual(x)
        for j in range(6):
            xp = x.copy()
            xp[j] += 1e-7
            fwd[:, j] = (residual(xp) - r0) / 1e-7
        for J in jacobians:
            assert np.abs(J - fwd).max() / scale < 1e-4


def test_unconverged_flag_when_budget_exhausted(rig):
    cfg, base, _ = rig
    target = bend_rotation(base, 1.0, 0.0)
    sol = solve_ik(IkProblem(target, cfg.rod, base), tol=1e-12, max_iter=2)
    assert not sol.converged
    assert sol.rod_state is not None   # best effort still returned


# -- current allocation ----------------------------------------------------------

def weighted_least_norm_oracle(coils, tip_R, env, demand):
    # closed-form: I = W^-1 T^T (T W^-1 T^T)^+ d, solved in the perp-B0 plane
    b = env.b0_direction
    T = np.array([np.cross(tip_R @ (c.moment_per_amp * c.moment_axis), env.b0)
                  for c in coils]).T
    d = demand - np.dot(demand, b) * b
    winv = np.diag([1.0 / c.resistance for c in coils])
    M = T @ winv @ T.T
    return winv @ T.T @ np.linalg.pinv(M, rcond=1e-12) @ d


def test_zero_torque_zero_currents(rig):
    cfg, base, coils = rig
    out = allocate_currents(np.zeros(3), base.rotation, coils, cfg.environment)
    assert all(v == 0.0 for v in out.currents.values())
    assert out.total_power == 0.0
    assert not out.saturated


def test_inplane_demand_goes_to_axial_only(rig):
    cfg, base, coils = rig
    tau = np.array([0.0, -3.495e-3, 0.0])   # 90-degree holding torque at L = 2 cm
    out = allocate_currents(tau, base.rotation, coils, cfg.environment,
                            power_cap=1.2)
    assert abs(out.currents["axial"] - 0.213) / 0.213 < 0.2
    assert abs(out.currents["saddle_x"]) < 5e-3
    assert abs(out.currents["saddle_y"]) < 5e-3
    assert np.linalg.norm(out.achieved_torque - tau) < 1e-9


def test_allocator_matches_least_norm_oracle(rig):
    cfg, base, coils = rig
    env = cfg.environment
    rng = np.random.default_rng(12)
    for _ in range(100):
        tip_R = random_rotation(rng)
        gen = rng.uniform(-0.2, 0.2, size=len(coils))
        demand = sum(g * np.cross(tip_R @ (c.moment_per_amp * c.moment_axis), env.b0)
                     for g, c in zip(gen, coils))
        out = allocate_currents(demand, tip_R, coils, env)
        oracle = weighted_least_norm_oracle(coils, tip_R, env, demand)
        ours = np.array([out.currents[c.name] for c in coils])
        p_oracle = float(np.sum(oracle**2 * [c.resistance for c in coils]))
        assert not out.saturated
        assert abs(out.total_power - p_oracle) <= 1e-9 * max(p_oracle, 1e-30)
        assert np.allclose(ours, oracle, atol=1e-12)
        # invariant: power accounting is exact
        recomputed = sum(out.currents[c.name] ** 2 * c.resistance for c in coils)
        assert abs(recomputed - out.total_power) <= 1e-12 * max(recomputed, 1e-30)


def test_achieved_torque_perpendicular_to_field(rig):
    cfg, base, coils = rig
    rng = np.random.default_rng(13)
    for _ in range(50):
        tau = rng.standard_normal(3) * 5e-3
        out = allocate_currents(tau, random_rotation(rng), coils, cfg.environment,
                                power_cap=1.2)
        assert abs(np.dot(out.achieved_torque, cfg.environment.b0)) < 1e-12
        # B0-aligned request component is reported, never silently dropped
        b = cfg.environment.b0_direction
        assert np.isclose(np.dot(out.torque_residual, b), np.dot(tau, b), atol=1e-9)


def test_allocation_respects_limits_and_cap(rig):
    cfg, base, coils = rig
    rng = np.random.default_rng(14)
    for _ in range(200):
        tau = rng.standard_normal(3) * rng.choice([1e-3, 1e-2, 1e-1])
        out = allocate_currents(tau, random_rotation(rng), coils, cfg.environment,
                                power_cap=1.2)
        for coil in coils:
            assert abs(out.currents[coil.name]) <= coil.current_limit * (1 + 1e-9)
        assert out.total_power <= 1.2 * (1 + 1e-9)


def test_saturated_demand_is_scaled_and_flagged(rig):
    cfg, base, coils = rig
    tau = np.array([0.0, -0.05, 0.0])   # far beyond the reachable torque
    out = allocate_currents(tau, base.rotation, coils, cfg.environment, power_cap=1.2)
    assert out.saturated
    achieved = np.linalg.norm(out.achieved_torque)
    assert 0 < achieved < np.linalg.norm(tau)
    # achieved direction matches the perp-B0 demand direction
    d = tau / np.linalg.norm(tau)
    assert np.dot(out.achieved_torque / achieved, d) > 0.999999


def test_small_grid_oracle(rig):
    # scaled-down version of the acceptance grid check (41^3 lattice)
    cfg, base, coils = rig
    env = cfg.environment
    rng = np.random.default_rng(15)
    tip_R = base.rotation
    n_pts = 41
    axes = [np.linspace(-c.current_limit, c.current_limit, n_pts) for c in coils]
    t_cols = [np.cross(tip_R @ (c.moment_per_amp * c.moment_axis), env.b0)
              for c in coils]
    resist = [c.resistance for c in coils]
    for _ in range(10):
        idx = [rng.integers(0, n_pts) for _ in range(3)]
        gen = [axes[j][idx[j]] for j in range(3)]
        demand = sum(g * t for g, t in zip(gen, t_cols))
        out = allocate_currents(demand, tip_R, coils, env)
        best = np.inf
        for i, ia in enumerate(axes[0]):
            t_rest = demand - ia * t_cols[0]
            grid_sy, grid_sz = np.meshgrid(axes[1], axes[2], indexing="ij")
            tt = (grid_sy[..., None] * t_cols[1] + grid_sz[..., None] * t_cols[2])
            miss = np.linalg.norm(tt - t_rest, axis=-1)
            ok = miss <= 1e-9
            if ok.any():
                p = ia**2 * resist[0] + grid_sy[ok]**2 * resist[1] + grid_sz[ok]**2 * resist[2]
                best = min(best, float(p.min()))
        assert best < np.inf
        assert out.total_power <= best * 1.01 + 1e-15


# -- steer_to ---------------------------------------------------------------------

def test_steer_zero_target(rig):
    cfg, base, coils = rig
    res = steer_to(0.0, 0.0, cfg.rod, coils, cfg.environment, base, power_cap=1.2)
    assert res.consistent
    assert all(abs(v) < 1e-12 for v in res.allocation.currents.values())


def test_steer_guard_rejects_beyond_model_validity(rig):
    cfg, base, coils = rig
    with pytest.raises(InvalidParameterError):
        steer_to(np.deg2rad(121.0), 0.0, cfg.rod, coils, cfg.environment, base)


def test_axial_current_monotone_in_bend(rig):
    cfg, base, coils = rig
    currents = []
    for deg in range(0, 101, 10):
        res = steer_to(np.deg2rad(deg), 0.0, cfg.rod, coils, cfg.environment,
                       base, power_cap=1.2)
        currents.append(abs(res.allocation.currents["axial"]))
    assert all(b > a for a, b in zip(currents, currents[1:]))


def test_hundred_degrees_within_current_budget(rig):
    cfg, base, coils = rig
    res = steer_to(np.deg2rad(100.0), 0.0, cfg.rod, coils, cfg.environment,
                   base, power_cap=1.2)
    assert res.consistent
    assert all(abs(v) <= 0.3 + 1e-12 for v in res.allocation.currents.values())


def test_out_of_plane_target_relaxes_to_reachable(rig):
    # a bend azimuth off the slice plane requests torque along B0 that no
    # coil can produce; the loop settles on the reachable shadow
    cfg, base, coils = rig
    res = steer_to(np.deg2rad(40.0), np.deg2rad(30.0), cfg.rod, coils,
                   cfg.environment, base, power_cap=1.2)
    assert res.consistent
    assert res.rounds >= 2
    gap = np.linalg.norm(res.allocation.achieved_torque - res.ik.tip_torque)
    assert gap <= 1e-6


def test_solve_tip_load_with_gravity(rig):
    cfg, base, _ = rig
    rod = cfg.rod.with_free_length(0.03)
    import dataclasses
    rod = dataclasses.replace(rod, gravity=np.array([0.0, 0.0, -9.81]),
                              linear_density=0.011)
    tip_moment = np.array([0.0, -1e-3, 0.0])
    state = solve_tip_load(rod, base, np.zeros(3), tip_moment)
    assert np.linalg.norm(state.internal_moments[-1] - tip_moment) < 1e-8
    assert np.linalg.norm(state.internal_forces[-1]) < 1e-8
