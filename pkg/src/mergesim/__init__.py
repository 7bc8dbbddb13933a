"""Mixed-traffic on-ramp merging: trajectory planning and simulation.

Connected automated vehicles receive energy-optimal cubic trajectories with
minimal-time exit scheduling under no-conflict constraints; human-driven
vehicles follow a heterogeneous intelligent driver model and are predicted
with a wave-shifted car-following model; a time-to-conflict monitor
triggers re-planning when predictions drift from reality.
"""

from .engine import (
    ArrivalSpec,
    SimConfig,
    SimLog,
    Simulation,
    config_from_dict,
    config_to_dict,
    run,
    substream,
)
from .human import DriverProfile, IdmParams, idm_accel, perturb_params
from .metrics import RunMetrics, compute_run_metrics, safety_audit
from .planner import PlanRequest, PlanResult, plan
from .predictor import (
    NewellParams,
    PredictionRecord,
    predict_all,
    predict_hdv,
    predicted_exit_time,
    shift_trajectory,
    solve_time_shift,
)
from .risk import ConflictMetrics, RiskParams, should_replan
from .scenario import (
    ConstraintParams,
    Geometry,
    Road,
    VehicleClass,
    VehicleRegistry,
    VehicleState,
)
from .trajectory import (
    BoundaryConditions,
    CubicTrajectory,
    bounds_check,
    solve_boundary,
)

__version__ = "0.1.0"

__all__ = [
    "ArrivalSpec",
    "BoundaryConditions",
    "ConflictMetrics",
    "ConstraintParams",
    "CubicTrajectory",
    "DriverProfile",
    "Geometry",
    "IdmParams",
    "NewellParams",
    "PlanRequest",
    "PlanResult",
    "PredictionRecord",
    "Road",
    "RunMetrics",
    "RiskParams",
    "SimConfig",
    "SimLog",
    "Simulation",
    "VehicleClass",
    "VehicleRegistry",
    "VehicleState",
    "bounds_check",
    "compute_run_metrics",
    "config_from_dict",
    "config_to_dict",
    "idm_accel",
    "perturb_params",
    "plan",
    "predict_all",
    "predict_hdv",
    "predicted_exit_time",
    "run",
    "safety_audit",
    "shift_trajectory",
    "solve_boundary",
    "solve_time_shift",
    "substream",
    "should_replan",
]
