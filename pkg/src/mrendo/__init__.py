"""Desk-scale simulator and controller for a Lorentz-force MRI-driven endoscope."""

from .coils import (
    ActuationCommand,
    CoilSpec,
    GeometryError,
    MagneticEnvironment,
    WireSpec,
    coil_moment,
    coil_resistance,
    joule_power,
    lorentz_torque,
    wire_lorentz_force,
)
from .config import ConfigError, SafetyLimits, SystemConfig, control_frame, load_config
from .control import (
    AllocationResult,
    IkProblem,
    IkSolution,
    SteerResult,
    allocate_currents,
    solve_ik,
    steer_to,
)
from .design import (
    ABLATION_THRESHOLD_W,
    DesignSweep,
    GrasperModel,
    ablation_table,
    blocking_force,
    design_curve,
)
from .phantom import (
    CollisionReport,
    InsertionState,
    PhantomMap,
    WorkspaceResult,
    collide,
    compute_workspace,
    load_phantom,
    tumor_reached,
)
from .rod import (
    DivergenceError,
    FramePose,
    InvalidParameterError,
    RodParams,
    RodState,
    SegmentState,
    integrate_forward,
    rod_params_from_rigidity,
    rod_rhs,
    so3_log_distance,
)
from .teleop import (
    Command,
    SimSession,
    Telemetry,
    run_scenario,
    scripted_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "ABLATION_THRESHOLD_W", "ActuationCommand", "AllocationResult", "CoilSpec",
    "CollisionReport", "Command", "ConfigError", "DesignSweep", "DivergenceError",
    "FramePose", "GeometryError", "GrasperModel", "IkProblem", "IkSolution",
    "InsertionState", "InvalidParameterError", "MagneticEnvironment", "PhantomMap",
    "RodParams", "RodState", "SafetyLimits", "SegmentState", "SimSession",
    "SteerResult", "SystemConfig", "Telemetry", "WireSpec", "WorkspaceResult",
    "ablation_table", "allocate_currents", "blocking_force", "coil_moment",
    "coil_resistance", "collide", "compute_workspace", "control_frame",
    "design_curve", "integrate_forward", "joule_power", "load_config",
    "load_phantom", "lorentz_torque", "rod_params_from_rigidity", "rod_rhs",
    "run_scenario", "scripted_scenario", "so3_log_distance", "solve_ik",
    "steer_to", "tumor_reached", "wire_lorentz_force",
]
