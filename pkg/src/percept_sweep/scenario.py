"""Scenario definitions and the kinematic ground-truth simulator.

Vehicles follow lane centerlines exactly (no steering or powertrain
dynamics); a lane change is a quintic lateral blend between lane centers.
The simulator integrates station along the road reference line from a
piecewise-linear speed profile and logs global pose, ground speed, lane and
road angle per vehicle on a fixed step grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .road import (
    RoadGeometry,
    quintic_step,
    quintic_step_rate,
    road_angle,
    to_global,
)

VEHICLE_ROLES = ("ego", "target", "lead", "surround")
MANEUVER_KINDS = ("keep_lane", "lane_change_left", "lane_change_right")

EGO_SPEED_MPS = 30.0
RELATIVE_VELOCITY_KMH = 5.0  # target speed minus ego speed, Table-style headline value
TARGET_SPEED_MPS = EGO_SPEED_MPS + RELATIVE_VELOCITY_KMH / 3.6
# Aborted-overtake surround vehicle: closes fast on the target's lane, then
# brakes back below ego speed. Its camera shadow therefore sweeps over the
# target and releases it again mid-maneuver, cutting an interior gap into the
# target's detection track (present - absent - present).
SURROUND_OVERTAKE_SPEED_MPS = TARGET_SPEED_MPS + 5.0
SURROUND_ABORT_START_S = 3.3
SURROUND_ABORT_END_S = 4.7
SURROUND_ABORT_SPEED_MPS = EGO_SPEED_MPS - 3.0

CAR_DIMS = (4.5, 1.8, 1.5)   # length, width, height in meters
VAN_DIMS = (5.5, 2.0, 2.2)

ARC_ROAD = RoadGeometry(kind="arc", lane_count=5, lane_width_m=3.6,
                        length_m=800.0, arc_radius_m=600.0)
STRAIGHT_ROAD = RoadGeometry(kind="straight", lane_count=3, lane_width_m=3.6,
                             length_m=800.0)


@dataclass(frozen=True)
class VehicleSpec:
    vehicle_id: str
    role: str
    length_m: float = CAR_DIMS[0]
    width_m: float = CAR_DIMS[1]
    height_m: float = CAR_DIMS[2]

    def __post_init__(self):
        if self.role not in VEHICLE_ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if min(self.length_m, self.width_m, self.height_m) <= 0.0:
            raise ValueError("vehicle dimensions must be positive")


@dataclass(frozen=True)
class VehiclePlacement:
    spec: VehicleSpec
    lane: int
    station_m: float
    speed_mps: float


@dataclass(frozen=True)
class ManeuverPlan:
    vehicle_id: str
    kind: str
    start_time_s: float
    duration_s: float
    initial_lane: int
    final_lane: int
    speed_profile: tuple = ()  # ((time_s, speed_mps), ...); empty = placement speed

    def __post_init__(self):
        if self.kind not in MANEUVER_KINDS:
            raise ValueError(f"unknown maneuver kind {self.kind!r}")
        if self.duration_s <= 0.0:
            raise ValueError("maneuver duration must be positive")
        delta = self.final_lane - self.initial_lane
        if self.kind == "keep_lane" and delta != 0:
            raise ValueError("keep_lane must not change lanes")
        if self.kind == "lane_change_left" and delta != 1:
            raise ValueError("lane_change_left must move exactly one lane left")
        if self.kind == "lane_change_right" and delta != -1:
            raise ValueError("lane_change_right must move exactly one lane right")
        times = [t for t, _ in self.speed_profile]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("speed_profile times must be strictly increasing")
        if any(v < 0.0 for _, v in self.speed_profile):
            raise ValueError("speed_profile speeds must be non-negative")


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    description: str
    road: RoadGeometry
    vehicles: tuple  # tuple[VehiclePlacement]
    maneuvers: tuple  # tuple[ManeuverPlan]
    duration_s: float = 20.0
    sim_step_s: float = 0.01
    relative_velocity_kmh: float = RELATIVE_VELOCITY_KMH

    def __post_init__(self):
        if self.duration_s <= 0.0 or self.sim_step_s <= 0.0:
            raise ValueError("duration and sim step must be positive")
        roles = [p.spec.role for p in self.vehicles]
        if roles.count("ego") != 1 or roles.count("target") != 1:
            raise ValueError("scenario needs exactly one ego and one target")
        ids = [p.spec.vehicle_id for p in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ValueError("vehicle ids must be unique")
        for plan in self.maneuvers:
            if plan.vehicle_id not in ids:
                raise ValueError(f"maneuver references unknown vehicle {plan.vehicle_id!r}")
        for p in self.vehicles:
            if not 0 <= p.lane < self.road.lane_count:
                raise ValueError(f"{p.spec.vehicle_id} placed outside road lanes")

    @property
    def ego_id(self) -> str:
        return next(p.spec.vehicle_id for p in self.vehicles if p.spec.role == "ego")

    @property
    def target_id(self) -> str:
        return next(p.spec.vehicle_id for p in self.vehicles if p.spec.role == "target")

    def placement(self, vehicle_id: str) -> VehiclePlacement:
        for p in self.vehicles:
            if p.spec.vehicle_id == vehicle_id:
                return p
        raise KeyError(vehicle_id)


def lateral_profile(plan: ManeuverPlan, t, lane_width_m: float):
    """Signed lateral offset from the initial lane center at time t.

    offset(t) = delta_y * quintic_step(tau) with tau = (t - start) / duration
    clamped to [0, 1]; delta_y = (final - initial) * lane_width.
    """
    delta_y = (plan.final_lane - plan.initial_lane) * lane_width_m
    tau = (np.asarray(t, dtype=float) - plan.start_time_s) / plan.duration_s
    return delta_y * quintic_step(tau)


def _lateral_rate(plan: ManeuverPlan, t, lane_width_m: float):
    delta_y = (plan.final_lane - plan.initial_lane) * lane_width_m
    tau = (np.asarray(t, dtype=float) - plan.start_time_s) / plan.duration_s
    return delta_y * quintic_step_rate(tau) / plan.duration_s


@dataclass(frozen=True)
class VehicleStates:
    """Per-frame state arrays for one vehicle across the whole run."""
    x_m: np.ndarray
    y_m: np.ndarray
    yaw_rad: np.ndarray
    speed_mps: np.ndarray
    accel_mps2: np.ndarray
    lane: np.ndarray
    road_angle_rad: np.ndarray
    station_m: np.ndarray
    lateral_m: np.ndarray

    def velocity(self) -> tuple:
        """Global velocity components (vx, vy) from speed and yaw."""
        return self.speed_mps * np.cos(self.yaw_rad), self.speed_mps * np.sin(self.yaw_rad)


@dataclass(frozen=True)
class GroundTruthLog:
    scenario_id: str
    road: RoadGeometry
    sim_step_s: float
    times_s: np.ndarray
    vehicles: dict  # vehicle_id -> VehicleStates, insertion-ordered
    specs: dict     # vehicle_id -> VehicleSpec
    ego_id: str
    target_id: str
    warnings: tuple = ()

    @property
    def n_frames(self) -> int:
        return len(self.times_s)

    def frame_index(self, t: float) -> int:
        idx = int(round(t / self.sim_step_s))
        if not 0 <= idx < self.n_frames:
            raise ValueError(f"time {t} s outside the simulated range")
        return idx

    def to_csv(self, path) -> None:
        """Write t, vehicle_id, x_m, y_m, yaw_rad, speed_mps, accel_mps2, lane, road_angle_rad."""
        lines = ["t,vehicle_id,x_m,y_m,yaw_rad,speed_mps,accel_mps2,lane,road_angle_rad"]
        for i, t in enumerate(self.times_s):
            for vid, st in self.vehicles.items():
                lines.append(
                    f"{t!r},{vid},{st.x_m[i]!r},{st.y_m[i]!r},{st.yaw_rad[i]!r},"
                    f"{st.speed_mps[i]!r},{st.accel_mps2[i]!r},{st.lane[i]},"
                    f"{st.road_angle_rad[i]!r}"
                )
        Path(path).write_text("\n".join(lines) + "\n")


def run_scenario(spec: ScenarioSpec) -> GroundTruthLog:
    """Simulate a scenario to a GroundTruthLog on the sim_step grid.

    Raises ValueError (with the frame index) if any vehicle center leaves the
    road bounds. Overlapping vehicle boxes produce a warning in the log
    metadata, not an error.
    """
    n = int(round(spec.duration_s / spec.sim_step_s)) + 1
    times = np.arange(n) * spec.sim_step_s
    road = spec.road
    kappa = road.curvature

    plans_by_vehicle: dict[str, list[ManeuverPlan]] = {}
    for plan in spec.maneuvers:
        plans_by_vehicle.setdefault(plan.vehicle_id, []).append(plan)

    vehicles: dict[str, VehicleStates] = {}
    for placement in spec.vehicles:
        vid = placement.spec.vehicle_id
        plans = plans_by_vehicle.get(vid, [])

        profile = ()
        for plan in plans:
            if plan.speed_profile:
                profile = plan.speed_profile
                break
        if profile:
            knot_t = np.array([p[0] for p in profile])
            knot_v = np.array([p[1] for p in profile])
            s_rate = np.interp(times, knot_t, knot_v)
        else:
            s_rate = np.full(n, placement.speed_mps)
        # Trapezoid integration is exact for a piecewise-linear speed profile
        # whose knots lie on the step grid.
        station = placement.station_m + np.concatenate(
            ([0.0], np.cumsum((s_rate[1:] + s_rate[:-1]) * 0.5 * spec.sim_step_s)))

        lateral = np.full(n, road.lane_center(placement.lane))
        lat_rate = np.zeros(n)
        for plan in plans:
            if plan.kind == "keep_lane":
                continue
            lateral = lateral + lateral_profile(plan, times, road.lane_width_m)
            lat_rate = lat_rate + _lateral_rate(plan, times, road.lane_width_m)

        out_s = (station < -1e-9) | (station > road.length_m + 1e-9)
        out_d = (lateral < -1e-9) | (lateral > road.width_m + 1e-9)
        if np.any(out_s | out_d):
            frame = int(np.argmax(out_s | out_d))
            raise ValueError(
                f"{vid} leaves road bounds at frame {frame} (t={times[frame]:.2f} s)")

        x, y = to_global(road, station, lateral)
        tangent = road_angle(road, station)
        v_along = s_rate * (1.0 - kappa * lateral)
        yaw = tangent + np.arctan2(lat_rate, v_along)
        speed = np.hypot(v_along, lat_rate)
        accel = np.gradient(speed, spec.sim_step_s)
        lane_idx = road.lane_of(lateral)

        vehicles[vid] = VehicleStates(
            x_m=x, y_m=y, yaw_rad=yaw, speed_mps=speed, accel_mps2=accel,
            lane=lane_idx, road_angle_rad=np.asarray(tangent, dtype=float),
            station_m=station, lateral_m=lateral)

    warnings = _collision_warnings(spec, vehicles, times)
    return GroundTruthLog(
        scenario_id=spec.scenario_id, road=road, sim_step_s=spec.sim_step_s,
        times_s=times, vehicles=vehicles,
        specs={p.spec.vehicle_id: p.spec for p in spec.vehicles},
        ego_id=spec.ego_id, target_id=spec.target_id, warnings=warnings)


def _collision_warnings(spec, vehicles, times) -> tuple:
    """Frenet axis-aligned box overlap check between every vehicle pair."""
    warnings = []
    placements = list(spec.vehicles)
    for i in range(len(placements)):
        for j in range(i + 1, len(placements)):
            a, b = placements[i].spec, placements[j].spec
            sa, sb = vehicles[a.vehicle_id], vehicles[b.vehicle_id]
            overlap = (
                (np.abs(sa.station_m - sb.station_m) < (a.length_m + b.length_m) / 2.0)
                & (np.abs(sa.lateral_m - sb.lateral_m) < (a.width_m + b.width_m) / 2.0))
            if np.any(overlap):
                frame = int(np.argmax(overlap))
                warnings.append(
                    f"boxes of {a.vehicle_id} and {b.vehicle_id} overlap from frame "
                    f"{frame} (t={times[frame]:.2f} s)")
    return tuple(warnings)


def _preset(scenario_id, description, road, ego_lane, target_from, target_to,
            lead_station, target_station, lc_start, surround, surround_plans=()):
    ego = VehiclePlacement(VehicleSpec("ego", "ego"), ego_lane, 30.0, EGO_SPEED_MPS)
    lead = VehiclePlacement(VehicleSpec("lead", "lead", *VAN_DIMS),
                            ego_lane, lead_station, EGO_SPEED_MPS)
    target = VehiclePlacement(VehicleSpec("target", "target"),
                              target_from, target_station, TARGET_SPEED_MPS)
    nio = surround
    kind = "lane_change_right" if target_to < target_from else "lane_change_left"
    plan = ManeuverPlan("target", kind, start_time_s=lc_start, duration_s=5.0,
                        initial_lane=target_from, final_lane=target_to)
    return ScenarioSpec(
        scenario_id=scenario_id, description=description, road=road,
        vehicles=(ego, lead, target, nio), maneuvers=(plan,) + tuple(surround_plans))


def _benign_surround(lane: int) -> VehiclePlacement:
    return VehiclePlacement(VehicleSpec("NIO", "surround"), lane, 60.0, EGO_SPEED_MPS)


def _overtaking_surround(lane: int) -> VehiclePlacement:
    return VehiclePlacement(VehicleSpec("NIO", "surround"), lane, 50.0,
                            SURROUND_OVERTAKE_SPEED_MPS)


def _abort_plan(lane: int) -> ManeuverPlan:
    return ManeuverPlan(
        "NIO", "keep_lane", start_time_s=SURROUND_ABORT_START_S,
        duration_s=SURROUND_ABORT_END_S - SURROUND_ABORT_START_S,
        initial_lane=lane, final_lane=lane,
        speed_profile=((SURROUND_ABORT_START_S, SURROUND_OVERTAKE_SPEED_MPS),
                       (SURROUND_ABORT_END_S, SURROUND_ABORT_SPEED_MPS)))


_PRESET_BUILDERS = {
    # Cut-in directly ahead of the ego car, curved road.
    "Sc-01": lambda: _preset(
        "Sc-01", "LC to the Right - In front of the Ego Car (US101)",
        ARC_ROAD, ego_lane=2, target_from=3, target_to=2,
        lead_station=85.0, target_station=48.0, lc_start=6.0,
        surround=_benign_surround(1)),
    "Sc-02": lambda: _preset(
        "Sc-02", "LC to the Left - In front of the Ego Car (US101)",
        ARC_ROAD, ego_lane=2, target_from=1, target_to=2,
        lead_station=85.0, target_station=48.0, lc_start=6.0,
        surround=_benign_surround(3)),
    # Cut-in ahead of the lead car; the surround car briefly occludes the
    # target during an aborted overtake in the target's initial lane.
    "Sc-03": lambda: _preset(
        "Sc-03", "LC to the Right - In front of the Lead Car (US101)",
        ARC_ROAD, ego_lane=2, target_from=3, target_to=2,
        lead_station=65.0, target_station=85.0, lc_start=4.0,
        surround=_overtaking_surround(3), surround_plans=(_abort_plan(3),)),
    "Sc-04": lambda: _preset(
        "Sc-04", "LC to the Left - In front of the Lead Car (US101)",
        ARC_ROAD, ego_lane=2, target_from=1, target_to=2,
        lead_station=65.0, target_station=85.0, lc_start=4.0,
        surround=_overtaking_surround(1), surround_plans=(_abort_plan(1),)),
    # On the straight presets the lane change begins only after the surround
    # car's aborted overtake has released the occlusion, so the hidden stretch
    # of the target track is plain constant-speed motion.
    "Sc-05": lambda: _preset(
        "Sc-05", "LC to the Right - In front of the Lead Car (Straight Road)",
        STRAIGHT_ROAD, ego_lane=1, target_from=2, target_to=1,
        lead_station=65.0, target_station=85.0, lc_start=5.3,
        surround=_overtaking_surround(2), surround_plans=(_abort_plan(2),)),
    "Sc-06": lambda: _preset(
        "Sc-06", "LC to the Left - In front of the Lead Car (Straight Road)",
        STRAIGHT_ROAD, ego_lane=1, target_from=0, target_to=1,
        lead_station=65.0, target_station=85.0, lc_start=5.3,
        surround=_overtaking_surround(0), surround_plans=(_abort_plan(0),)),
}

PRESET_IDS = tuple(_PRESET_BUILDERS)


def preset_scenario(scenario_id: str) -> ScenarioSpec:
    try:
        return _PRESET_BUILDERS[scenario_id]()
    except KeyError:
        raise KeyError(
            f"unknown scenario {scenario_id!r}; presets: {', '.join(PRESET_IDS)}")


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "id": spec.scenario_id,
        "description": spec.description,
        "road": {
            "kind": spec.road.kind,
            "lane_count": spec.road.lane_count,
            "lane_width_m": spec.road.lane_width_m,
            "length_m": spec.road.length_m,
            "arc_radius_m": spec.road.arc_radius_m,
        },
        "vehicles": [
            {
                "id": p.spec.vehicle_id,
                "role": p.spec.role,
                "length_m": p.spec.length_m,
                "width_m": p.spec.width_m,
                "height_m": p.spec.height_m,
                "lane": p.lane,
                "station_m": p.station_m,
                "speed_mps": p.speed_mps,
            }
            for p in spec.vehicles
        ],
        "maneuvers": [
            {
                "vehicle_id": m.vehicle_id,
                "kind": m.kind,
                "start_time_s": m.start_time_s,
                "duration_s": m.duration_s,
                "initial_lane": m.initial_lane,
                "final_lane": m.final_lane,
                "speed_profile": [list(p) for p in m.speed_profile],
            }
            for m in spec.maneuvers
        ],
        "relative_velocity_kmh": spec.relative_velocity_kmh,
        "duration_s": spec.duration_s,
        "sim_step_s": spec.sim_step_s,
    }


_ROAD_KEYS = {"kind", "lane_count", "lane_width_m", "length_m", "arc_radius_m"}
_VEHICLE_KEYS = {"id", "role", "length_m", "width_m", "height_m", "lane",
                 "station_m", "speed_mps"}
_MANEUVER_KEYS = {"vehicle_id", "kind", "start_time_s", "duration_s",
                  "initial_lane", "final_lane", "speed_profile"}
_SCENARIO_KEYS = {"id", "description", "road", "vehicles", "maneuvers",
                  "relative_velocity_kmh", "duration_s", "sim_step_s"}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"unknown keys in {where}: {', '.join(sorted(unknown))}")


def scenario_from_dict(obj: dict) -> ScenarioSpec:
    _reject_unknown(obj, _SCENARIO_KEYS, "scenario")
    _reject_unknown(obj["road"], _ROAD_KEYS, "scenario.road")
    road = RoadGeometry(
        kind=obj["road"]["kind"], lane_count=obj["road"]["lane_count"],
        lane_width_m=obj["road"]["lane_width_m"], length_m=obj["road"]["length_m"],
        arc_radius_m=obj["road"].get("arc_radius_m"))
    vehicles = []
    for v in obj["vehicles"]:
        _reject_unknown(v, _VEHICLE_KEYS, "scenario.vehicles[]")
        spec = VehicleSpec(v["id"], v["role"], v.get("length_m", CAR_DIMS[0]),
                           v.get("width_m", CAR_DIMS[1]), v.get("height_m", CAR_DIMS[2]))
        vehicles.append(VehiclePlacement(spec, v["lane"], v["station_m"], v["speed_mps"]))
    maneuvers = []
    for m in obj["maneuvers"]:
        _reject_unknown(m, _MANEUVER_KEYS, "scenario.maneuvers[]")
        maneuvers.append(ManeuverPlan(
            m["vehicle_id"], m["kind"], m["start_time_s"], m["duration_s"],
            m["initial_lane"], m["final_lane"],
            tuple(tuple(p) for p in m.get("speed_profile", []))))
    return ScenarioSpec(
        scenario_id=obj["id"], description=obj.get("description", obj["id"]),
        road=road, vehicles=tuple(vehicles), maneuvers=tuple(maneuvers),
        duration_s=obj["duration_s"], sim_step_s=obj["sim_step_s"],
        relative_velocity_kmh=obj.get("relative_velocity_kmh", RELATIVE_VELOCITY_KMH))


def save_scenario(spec: ScenarioSpec, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(spec), indent=2) + "\n")


def load_scenario(path) -> ScenarioSpec:
    return scenario_from_dict(json.loads(Path(path).read_text()))
