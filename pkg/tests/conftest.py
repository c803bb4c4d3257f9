"""Shared fixtures: cached scenario logs and small input builders.

Scenario simulation is deterministic, so logs are computed once per session
and shared read-only across tests.
"""

import numpy as np
import pytest

from percept_sweep.road import RoadGeometry
from percept_sweep.scenario import (
    ManeuverPlan,
    ScenarioSpec,
    VehiclePlacement,
    VehicleSpec,
    preset_scenario,
    run_scenario,
)
from percept_sweep.tracks import (
    HISTORY_FRAMES,
    HORIZON_STEPS,
    MODEL_RATE_HZ,
    LaneContext,
    ModelInput,
    NeighborGrid,
    ReferencePose,
    TrackHistory,
)

STRAIGHT_3 = RoadGeometry(kind="straight", lane_count=3, lane_width_m=3.6,
                          length_m=800.0)


@pytest.fixture(scope="session")
def sc01_log():
    return run_scenario(preset_scenario("Sc-01"))


@pytest.fixture(scope="session")
def sc05_log():
    return run_scenario(preset_scenario("Sc-05"))


def make_convoy_spec(stations, lanes, speeds=None, duration_s=10.0,
                     scenario_id="convoy"):
    """Straight-road scenario with an ego, a target and extra surround cars.

    stations/lanes index vehicles in order: ego, target, then s2, s3, ...
    All keep lane at constant speed (default 30 m/s).
    """
    n = len(stations)
    speeds = speeds or [30.0] * n
    roles = ["ego", "target"] + ["surround"] * (n - 2)
    ids = ["ego", "target"] + [f"s{i}" for i in range(2, n)]
    vehicles = tuple(
        VehiclePlacement(VehicleSpec(ids[i], roles[i]), lanes[i], stations[i],
                         speeds[i])
        for i in range(n))
    return ScenarioSpec(scenario_id=scenario_id, description="test convoy",
                        road=STRAIGHT_3, vehicles=vehicles, maneuvers=(),
                        duration_s=duration_s)


def make_track(xs, ys, present=None, t0=0.0, rate_hz=MODEL_RATE_HZ,
               vehicle_id="target"):
    """Uniform-rate TrackHistory ending at t0 + (n-1)/rate."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = len(xs)
    if present is None:
        present = np.ones(n, dtype=bool)
    times = t0 + np.arange(n) / rate_hz
    return TrackHistory(vehicle_id=vehicle_id, times_s=times, x_m=xs, y_m=ys,
                        present=np.asarray(present, dtype=bool))


def make_input(target_track, cells=None, lane_context=None, horizon=HORIZON_STEPS,
               scenario_id="unit", reference=None):
    """ModelInput around a target-frame track, defaulting to an open road."""
    if lane_context is None:
        lane_context = LaneContext(lane_width_m=3.6, offset_in_lane_m=0.0,
                                   lanes_left=1, lanes_right=1)
    if reference is None:
        reference = ReferencePose(0.0, 0.0, 0.0)
    grid = NeighborGrid(target=target_track, cells=cells or {})
    return ModelInput(scenario_id=scenario_id,
                      t=float(target_track.times_s[-1]), grid=grid,
                      rate_hz=MODEL_RATE_HZ, horizon=horizon,
                      reference=reference, lane_context=lane_context)


def history_track(position_fn, t_end, rate_hz=MODEL_RATE_HZ,
                  n=HISTORY_FRAMES, present=None):
    """Track sampled from position_fn(t) -> (x, y) ending at t_end."""
    times = t_end - np.arange(n - 1, -1, -1) / rate_hz
    pts = np.array([position_fn(t) for t in times], dtype=float)
    if present is None:
        present = np.ones(n, dtype=bool)
    return TrackHistory(vehicle_id="target", times_s=times, x_m=pts[:, 0],
                        y_m=pts[:, 1], present=np.asarray(present, dtype=bool))
