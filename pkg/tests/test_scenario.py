"""Scenario presets, deterministic simulation, and ground-truth log checks."""

import numpy as np
import pytest

from conftest import make_convoy_spec
from percept_sweep.road import QUINTIC_MAX_CURVATURE, RoadGeometry
from percept_sweep.scenario import (
    PRESET_IDS,
    ManeuverPlan,
    ScenarioSpec,
    VehiclePlacement,
    VehicleSpec,
    lateral_profile,
    load_scenario,
    preset_scenario,
    run_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)

LANE_W = 3.6


# --------------------------------------------------------------------------
# presets

def test_preset_catalogue():
    assert PRESET_IDS == ("Sc-01", "Sc-02", "Sc-03", "Sc-04", "Sc-05", "Sc-06")
    for sid in PRESET_IDS:
        spec = preset_scenario(sid)
        assert spec.scenario_id == sid
        assert spec.relative_velocity_kmh == 5.0
        ids = [p.spec.vehicle_id for p in spec.vehicles]
        assert "NIO" in ids
        roles = [p.spec.role for p in spec.vehicles]
        assert roles.count("ego") == 1 and roles.count("target") == 1


def test_preset_sc05_is_straight_right_lc_ahead_of_lead():
    spec = preset_scenario("Sc-05")
    assert spec.road.kind == "straight"
    plan = next(m for m in spec.maneuvers if m.vehicle_id == spec.target_id)
    assert plan.kind == "lane_change_right"
    target = spec.placement(spec.target_id)
    lead = spec.placement("lead")
    assert target.station_m > lead.station_m


def test_preset_sc02_is_arc_left_lc_ahead_of_ego():
    spec = preset_scenario("Sc-02")
    assert spec.road.kind == "arc"
    plan = next(m for m in spec.maneuvers if m.vehicle_id == spec.target_id)
    assert plan.kind == "lane_change_left"
    target = spec.placement(spec.target_id)
    lead = spec.placement("lead")
    assert target.station_m < lead.station_m


def test_unknown_preset_lists_valid_ids():
    with pytest.raises(KeyError, match="Sc-01"):
        preset_scenario("Sc-99")


def test_relative_velocity_matches_initial_speeds():
    for sid in PRESET_IDS:
        spec = preset_scenario(sid)
        v_target = spec.placement(spec.target_id).speed_mps
        v_ego = spec.placement(spec.ego_id).speed_mps
        assert (v_target - v_ego) * 3.6 == pytest.approx(5.0, abs=1e-9)


# --------------------------------------------------------------------------
# lateral profile

def test_lateral_profile_boundaries_and_clamp():
    plan = ManeuverPlan("target", "lane_change_left", start_time_s=2.0,
                        duration_s=5.0, initial_lane=1, final_lane=2)
    assert float(lateral_profile(plan, 2.0, LANE_W)) == 0.0
    assert float(lateral_profile(plan, 7.0, LANE_W)) == pytest.approx(LANE_W)
    assert float(lateral_profile(plan, 0.0, LANE_W)) == 0.0       # before start
    assert float(lateral_profile(plan, 99.0, LANE_W)) == pytest.approx(LANE_W)
    assert float(lateral_profile(plan, 4.5, LANE_W)) == pytest.approx(1.8)


def test_lateral_profile_hand_value():
    plan = ManeuverPlan("target", "lane_change_left", start_time_s=0.0,
                        duration_s=4.0, initial_lane=0, final_lane=1)
    assert float(lateral_profile(plan, 1.0, LANE_W)) == pytest.approx(
        0.37265625, abs=1e-12)


def test_lateral_profile_signed_for_right_change():
    plan = ManeuverPlan("target", "lane_change_right", start_time_s=0.0,
                        duration_s=4.0, initial_lane=1, final_lane=0)
    assert float(lateral_profile(plan, 4.0, LANE_W)) == pytest.approx(-LANE_W)


# --------------------------------------------------------------------------
# run_scenario

def test_sc05_frame_count_and_completeness(sc05_log):
    log = sc05_log
    assert log.n_frames == 2001
    assert log.times_s[0] == 0.0
    assert log.times_s[-1] == pytest.approx(20.0)
    for vid, states in log.vehicles.items():
        for arr in (states.x_m, states.y_m, states.yaw_rad, states.speed_mps):
            assert len(arr) == 2001
            assert np.all(np.isfinite(arr)), vid


def test_run_scenario_deterministic():
    a = run_scenario(preset_scenario("Sc-03"))
    b = run_scenario(preset_scenario("Sc-03"))
    for vid in a.vehicles:
        sa, sb = a.vehicles[vid], b.vehicles[vid]
        assert sa.x_m.tobytes() == sb.x_m.tobytes()
        assert sa.y_m.tobytes() == sb.y_m.tobytes()
        assert sa.speed_mps.tobytes() == sb.speed_mps.tobytes()


def test_sc01_target_changes_lane_exactly_once(sc01_log):
    lanes = sc01_log.vehicles[sc01_log.target_id].lane
    changes = np.flatnonzero(np.diff(lanes))
    assert len(changes) == 1
    assert lanes[0] == lanes[changes[0]] == 3
    assert lanes[-1] == 2


def test_position_continuity(sc01_log):
    log = sc01_log
    for vid, states in log.vehicles.items():
        step = np.hypot(np.diff(states.x_m), np.diff(states.y_m))
        v_max = float(np.max(states.speed_mps))
        assert np.all(step <= v_max * log.sim_step_s + 1e-9), vid


def test_constant_speed_consistency(sc05_log, sc01_log):
    # Fourth-order central difference of position vs logged speed; applies to
    # vehicles that hold a constant speed (ego and lead in every preset).
    for log in (sc05_log, sc01_log):
        h = log.sim_step_s
        for vid in ("ego", "lead"):
            st = log.vehicles[vid]
            x, y = st.x_m, st.y_m
            vx = (-x[4:] + 8 * x[3:-1] - 8 * x[1:-3] + x[:-4]) / (12 * h)
            vy = (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * h)
            fd_speed = np.hypot(vx, vy)
            assert np.allclose(fd_speed, st.speed_mps[2:-2], atol=1e-6), vid


def test_lane_change_lateral_acceleration_bounded(sc05_log):
    log = sc05_log
    st = log.vehicles[log.target_id]
    h = log.sim_step_s
    lat = st.lateral_m
    acc = np.diff(lat, 2) / h / h
    # One lane over 5 s: peak |d2y/dt2| = lane_width * max|step''| / duration^2.
    bound = LANE_W * QUINTIC_MAX_CURVATURE / 25.0
    assert float(np.max(np.abs(acc))) <= bound + 1e-6


def test_presets_have_no_collision_warnings():
    for sid in PRESET_IDS:
        log = run_scenario(preset_scenario(sid))
        assert log.warnings == (), sid


def test_overlapping_boxes_produce_warning():
    spec = make_convoy_spec(stations=[30.0, 32.0], lanes=[1, 1],
                            duration_s=9.0, scenario_id="overlap")
    log = run_scenario(spec)
    assert len(log.warnings) == 1
    assert "ego" in log.warnings[0] and "target" in log.warnings[0]


def test_vehicle_leaving_road_raises_with_frame():
    spec = make_convoy_spec(stations=[30.0, 790.0], lanes=[1, 1],
                            duration_s=9.0, scenario_id="overrun")
    with pytest.raises(ValueError, match="frame"):
        run_scenario(spec)


def test_speed_profile_is_followed():
    # Piecewise-linear speed profile with knots on the step grid integrates
    # exactly with trapezoid stations.
    plan = ManeuverPlan("target", "keep_lane", start_time_s=0.0, duration_s=8.0,
                        initial_lane=1, final_lane=1,
                        speed_profile=((2.0, 30.0), (4.0, 20.0)))
    spec = make_convoy_spec(stations=[0.0, 60.0], lanes=[0, 1], duration_s=8.0,
                            scenario_id="braking")
    spec = ScenarioSpec(
        scenario_id="braking", description=spec.description, road=spec.road,
        vehicles=spec.vehicles, maneuvers=(plan,), duration_s=8.0)
    log = run_scenario(spec)
    st = log.vehicles["target"]
    assert float(st.speed_mps[log.frame_index(1.0)]) == pytest.approx(30.0)
    assert float(st.speed_mps[log.frame_index(3.0)]) == pytest.approx(25.0)
    assert float(st.speed_mps[log.frame_index(6.0)]) == pytest.approx(20.0)
    # Station gained on [2, 4] equals the trapezoid of the 30 -> 20 ramp.
    s2 = float(st.station_m[log.frame_index(2.0)])
    s4 = float(st.station_m[log.frame_index(4.0)])
    assert s4 - s2 == pytest.approx(50.0, abs=1e-9)


def test_frame_index_bounds(sc05_log):
    assert sc05_log.frame_index(0.0) == 0
    assert sc05_log.frame_index(20.0) == 2000
    with pytest.raises(ValueError):
        sc05_log.frame_index(20.01)


# --------------------------------------------------------------------------
# spec validation and serialization

def test_scenario_spec_validation_errors():
    ego = VehiclePlacement(VehicleSpec("ego", "ego"), 1, 30.0, 30.0)
    tgt = VehiclePlacement(VehicleSpec("target", "target"), 1, 60.0, 30.0)
    road = RoadGeometry(kind="straight", lane_count=3, lane_width_m=3.6,
                        length_m=800.0)
    with pytest.raises(ValueError, match="exactly one ego"):
        ScenarioSpec("x", "two egos", road,
                     (ego, VehiclePlacement(VehicleSpec("e2", "ego"), 0, 0.0, 30.0)),
                     ())
    with pytest.raises(ValueError, match="unknown vehicle"):
        ScenarioSpec("x", "bad plan", road, (ego, tgt),
                     (ManeuverPlan("ghost", "keep_lane", 0.0, 1.0, 1, 1),))
    with pytest.raises(ValueError, match="outside road lanes"):
        ScenarioSpec("x", "bad lane", road,
                     (ego, VehiclePlacement(VehicleSpec("target", "target"),
                                            7, 60.0, 30.0)), ())
    with pytest.raises(ValueError, match="positive"):
        ScenarioSpec("x", "bad step", road, (ego, tgt), (), sim_step_s=0.0)


def test_maneuver_plan_validation():
    with pytest.raises(ValueError, match="one lane left"):
        ManeuverPlan("v", "lane_change_left", 0.0, 5.0, 1, 3)
    with pytest.raises(ValueError, match="one lane right"):
        ManeuverPlan("v", "lane_change_right", 0.0, 5.0, 1, 2)
    with pytest.raises(ValueError, match="strictly increasing"):
        ManeuverPlan("v", "keep_lane", 0.0, 5.0, 1, 1,
                     speed_profile=((2.0, 30.0), (2.0, 20.0)))
    with pytest.raises(ValueError, match="duration"):
        ManeuverPlan("v", "keep_lane", 0.0, 0.0, 1, 1)


def test_scenario_roundtrip_dict_and_file(tmp_path):
    spec = preset_scenario("Sc-04")
    clone = scenario_from_dict(scenario_to_dict(spec))
    assert clone == spec
    path = tmp_path / "sc04.json"
    save_scenario(spec, path)
    assert load_scenario(path) == spec


def test_scenario_from_dict_rejects_unknown_keys():
    obj = scenario_to_dict(preset_scenario("Sc-01"))
    obj["surprise"] = 1
    with pytest.raises(ValueError, match="surprise"):
        scenario_from_dict(obj)
