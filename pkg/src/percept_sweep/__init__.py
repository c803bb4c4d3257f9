"""Sensor-parameter sweeps scored by trajectory-prediction divergence.

The package simulates highway lane-change scenarios, renders them through
configurable radar/camera sensor models, feeds both the ground-truth and the
detection-sourced track histories to a trajectory predictor, and scores each
sensor configuration by how far the two predictions diverge. Sweeps over a
sensor parameter select the configuration with the lowest mean divergence.
"""

from .evaluation import (
    PredictionRecord,
    RunResult,
    RunSpec,
    SweepResult,
    SweepSpec,
    default_prediction_times,
    displacement_errors,
    execute_run,
    rmse_divergence,
    run_sweep,
)
from .predictors import (
    GaussianStep,
    GaussianTrajectory,
    PredictionError,
    PredictorId,
    classify_maneuver,
    predict,
    predict_constant_acceleration,
    predict_constant_velocity,
    predict_social_grid,
)
from .road import RoadGeometry, quintic_step, quintic_step_rate
from .scenario import (
    PRESET_IDS,
    GroundTruthLog,
    ManeuverPlan,
    ScenarioSpec,
    VehiclePlacement,
    VehicleSpec,
    load_scenario,
    preset_scenario,
    run_scenario,
    save_scenario,
)
from .sensors import (
    CameraParams,
    DetectionParams,
    DetectionSet,
    RadarParams,
    SensorConfig,
    camera_config,
    occlusion_fraction,
    radar_config,
    radar_snr_db,
    sense,
    stereo_range_sigma,
)
from .tracks import (
    ModelInput,
    NeighborGrid,
    TargetNeverDetectedError,
    TrackHistory,
    TrackSource,
    assemble_history,
    impute_linear,
)
from .wire import (
    EndpointClosed,
    EndpointTimeout,
    ExternalPredictor,
    InvariantViolation,
    MalformedMessage,
    ProtocolError,
    WrongStepCount,
)

__version__ = "0.1.0"

__all__ = [
    "CameraParams", "DetectionParams", "DetectionSet", "EndpointClosed",
    "EndpointTimeout", "ExternalPredictor", "GaussianStep", "GaussianTrajectory",
    "GroundTruthLog", "InvariantViolation", "MalformedMessage", "ManeuverPlan",
    "ModelInput", "NeighborGrid", "PRESET_IDS", "PredictionError",
    "PredictionRecord", "PredictorId", "ProtocolError", "RadarParams",
    "RoadGeometry", "RunResult", "RunSpec", "ScenarioSpec", "SensorConfig",
    "SweepResult", "SweepSpec", "TargetNeverDetectedError", "TrackHistory",
    "TrackSource", "VehiclePlacement", "VehicleSpec", "WrongStepCount",
    "assemble_history", "camera_config", "classify_maneuver",
    "default_prediction_times", "displacement_errors", "execute_run",
    "impute_linear", "load_scenario", "occlusion_fraction", "predict",
    "predict_constant_acceleration", "predict_constant_velocity",
    "predict_social_grid", "preset_scenario", "quintic_step",
    "quintic_step_rate", "radar_config", "radar_snr_db", "rmse_divergence",
    "run_scenario", "run_sweep", "save_scenario", "sense", "stereo_range_sigma",
]
