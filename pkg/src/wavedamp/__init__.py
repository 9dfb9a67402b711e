"""wavedamp: single-lane mixed-autonomy traffic simulation and
wave-dampening controller training."""

__version__ = "0.1.0"

from .trajectory import LeaderTrajectory, synth_trajectory
from .drivers import (IdmParams, idm_accel, idm_equilibrium_gap, FsParams,
                      follower_stopper_cmd, AccSettings, AccPlantParams,
                      acc_plant_accel)
from .wrappers import (gap_closing_threshold, failsafe_threshold, ttc,
                       wrap_acceleration, clip_speed_setting, estimate_accel,
                       WrapperThresholds)
from .planner import SegmentFeed, SpeedPlannerAdvice, speed_planner_query
from .energy import (EnergyModel, DEFAULT_MODEL, fuel_rate, mpg,
                     check_convexity, profile_fuel, load_model, save_model)
from .simulation import (VehicleState, WorldState, make_world, step,
                         inject_lane_change, SimulationTrace)
from .scenario import ControllerSpec, ScenarioConfig, run_scenario
from .metrics import (per_vehicle_stats, throughput, distance_to_nearest_av,
                      binned_stats, va_gaussian_det, speed_histogram,
                      time_space_export, build_report, MetricsReport)

__all__ = [
    "LeaderTrajectory", "synth_trajectory",
    "IdmParams", "idm_accel", "idm_equilibrium_gap", "FsParams",
    "follower_stopper_cmd", "AccSettings", "AccPlantParams",
    "acc_plant_accel",
    "gap_closing_threshold", "failsafe_threshold", "ttc",
    "wrap_acceleration", "clip_speed_setting", "estimate_accel",
    "WrapperThresholds",
    "SegmentFeed", "SpeedPlannerAdvice", "speed_planner_query",
    "EnergyModel", "DEFAULT_MODEL", "fuel_rate", "mpg", "check_convexity",
    "profile_fuel", "load_model", "save_model",
    "VehicleState", "WorldState", "make_world", "step",
    "inject_lane_change", "SimulationTrace",
    "ControllerSpec", "ScenarioConfig", "run_scenario",
    "per_vehicle_stats", "throughput", "distance_to_nearest_av",
    "binned_stats", "va_gaussian_det", "speed_histogram",
    "time_space_export", "build_report", "MetricsReport",
]
