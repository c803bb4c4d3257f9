"""Radar and stereo-camera detection models.

Both sensors share the same skeleton: gate each non-ego vehicle by field of
view and range (using the nearest corner of its 3D box), score it with a
modality-specific confidence, perturb the true measurement when noise is
enabled, and keep detections whose confidence clears the threshold.

Radar confidence comes from a dB-domain range equation with an occlusion
penalty on SNR; camera confidence is the unoccluded fraction of the projected
bounding box. Occlusion for both is an exact rectangle-union computation
(image-plane boxes for the camera, azimuth/elevation boxes for the radar).

Ranges and azimuths are ground-plane quantities measured to the vehicle
center; elevation enters only the vertical FOV gate and the occlusion boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scenario import GroundTruthLog

BOLTZMANN_J_PER_K = 1.380649e-23
REFERENCE_TEMP_K = 290.0
SPEED_OF_LIGHT_MPS = 299792458.0

MODALITIES = ("radar", "camera")

# Fraction of a fully occluded box that still returns radar energy
# (multipath / ground bounce floor).
RADAR_VISIBLE_FLOOR = 0.05


@dataclass(frozen=True)
class RadarParams:
    """Long-range automotive radar, 77 GHz band."""
    dist_accuracy_m: float = 0.4
    dist_resolution_m: float = 1.8
    azimuth_accuracy_deg: float = 0.1
    azimuth_resolution_deg: float = 1.6
    speed_accuracy_kmh: float = 0.1
    speed_resolution_kmh: float = 0.4
    cycle_time_ms: float = 60.0
    tx_frequency_ghz: float = 77.0
    tx_power_dbm: float = 14.0
    noise_bandwidth_hz: float = 25000.0
    noise_figure_db: float = 4.8
    antenna_gain_dbi: float = 25.0
    default_rcs_dbsm: float = 10.0
    snr_threshold_db: float = 15.0
    atmospheric_loss_db_per_km: float = 0.4

    def __post_init__(self):
        positive = (
            self.dist_accuracy_m, self.dist_resolution_m, self.azimuth_accuracy_deg,
            self.azimuth_resolution_deg, self.speed_accuracy_kmh,
            self.speed_resolution_kmh, self.cycle_time_ms, self.tx_frequency_ghz,
            self.noise_bandwidth_hz)
        if min(positive) <= 0.0:
            raise ValueError("radar accuracies, resolutions, cycle time, frequency "
                             "and bandwidth must be positive")
        if self.atmospheric_loss_db_per_km < 0.0:
            raise ValueError("atmospheric loss must be non-negative")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT_MPS / (self.tx_frequency_ghz * 1e9)


@dataclass(frozen=True)
class CameraParams:
    """Forward stereo camera; range error follows the disparity geometry."""
    h_resolution_px: int = 1280
    v_resolution_px: int = 960
    resolution_factor: float = 50.0  # carried from the datasheet, not consumed
    camera_type: str = "stereo"
    baseline_m: float = 0.12
    disparity_error_px: float = 0.5
    focal_length_px: float = 2400.0
    frame_time_ms: float = 60.0

    def __post_init__(self):
        if self.h_resolution_px <= 0 or self.v_resolution_px <= 0:
            raise ValueError("resolution must be positive")
        if min(self.baseline_m, self.disparity_error_px, self.focal_length_px,
               self.frame_time_ms) <= 0.0:
            raise ValueError("baseline, disparity error, focal length and frame "
                             "time must be positive")


@dataclass(frozen=True)
class Mount:
    """Sensor pose on the ego body: x forward, y left, z up, yaw left-positive."""
    x_m: float
    y_m: float
    z_m: float
    yaw_rad: float = 0.0


RADAR_MOUNT = Mount(x_m=3.8, y_m=0.0, z_m=0.5)    # front bumper
CAMERA_MOUNT = Mount(x_m=1.8, y_m=0.0, z_m=1.3)   # windscreen top


@dataclass(frozen=True)
class DetectionParams:
    confidence_threshold: float = 0.6

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence threshold must lie in [0, 1]")


@dataclass(frozen=True)
class SensorConfig:
    modality: str
    hfov_deg: float = 120.0
    vfov_deg: float = 15.0
    range_max_m: float = 100.0
    mount: Mount | None = None
    seed: int = 0
    noise_enabled: bool = True
    radar: RadarParams = field(default_factory=RadarParams)
    camera: CameraParams = field(default_factory=CameraParams)

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if not 0.0 < self.hfov_deg <= 360.0:
            raise ValueError("hfov_deg must lie in (0, 360]")
        if not 0.0 < self.vfov_deg <= 180.0:
            raise ValueError("vfov_deg must lie in (0, 180]")
        if self.range_max_m <= 0.0:
            raise ValueError("range_max_m must be positive")
        if self.mount is None:
            default = RADAR_MOUNT if self.modality == "radar" else CAMERA_MOUNT
            object.__setattr__(self, "mount", default)

    @property
    def sensor_id(self) -> str:
        return self.modality

    @property
    def cycle_time_ms(self) -> float:
        return (self.radar.cycle_time_ms if self.modality == "radar"
                else self.camera.frame_time_ms)


def radar_config(**kwargs) -> SensorConfig:
    return SensorConfig(modality="radar", **kwargs)


def camera_config(**kwargs) -> SensorConfig:
    return SensorConfig(modality="camera", **kwargs)


@dataclass(frozen=True)
class DetectionEntry:
    vehicle_id: str
    range_m: float
    azimuth_rad: float
    rel_speed_mps: float
    x_ego_m: float
    y_ego_m: float
    confidence: float


@dataclass(frozen=True)
class DetectionFrame:
    t: float
    sim_index: int
    entries: tuple  # tuple[DetectionEntry], sorted by vehicle_id


@dataclass(frozen=True)
class DetectionSet:
    sensor_id: str
    config: SensorConfig
    stride: int            # sim frames per sensor frame
    frames: tuple          # tuple[DetectionFrame]

    def to_csv(self, path) -> None:
        lines = ["t,sensor_id,vehicle_id,range_m,azimuth_rad,rel_speed_mps,"
                 "x_ego_m,y_ego_m,confidence"]
        for frame in self.frames:
            for e in frame.entries:
                lines.append(
                    f"{frame.t!r},{self.sensor_id},{e.vehicle_id},{e.range_m!r},"
                    f"{e.azimuth_rad!r},{e.rel_speed_mps!r},{e.x_ego_m!r},"
                    f"{e.y_ego_m!r},{e.confidence!r}")
        Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# geometry helpers

def _rot2(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def box_corners(center_xy, yaw: float, dims) -> np.ndarray:
    """(8, 3) world-frame corners of a vehicle box standing on the ground."""
    length, width, height = dims
    sx = np.array([1, 1, 1, 1, -1, -1, -1, -1]) * (length / 2.0)
    sy = np.array([1, 1, -1, -1, 1, 1, -1, -1]) * (width / 2.0)
    sz = np.array([0, 1, 0, 1, 0, 1, 0, 1]) * height
    rot = _rot2(yaw)
    xy = rot @ np.vstack([sx, sy])
    return np.column_stack([xy[0] + center_xy[0], xy[1] + center_xy[1], sz])


def _sensor_frame(corners_world: np.ndarray, sensor_pos, sensor_yaw: float) -> np.ndarray:
    rel = corners_world.copy()
    rel[:, 0] -= sensor_pos[0]
    rel[:, 1] -= sensor_pos[1]
    rel[:, 2] -= sensor_pos[2]
    rot = _rot2(-sensor_yaw)
    rel[:, :2] = rel[:, :2] @ rot.T
    return rel


def fov_range_gate(config: SensorConfig, rel_position) -> bool:
    """Gate a single sensor-frame point by azimuth, elevation and range.

    rel_position is (x forward, y left, z up) in meters relative to the
    sensor. Boundaries are inclusive.
    """
    x, y, z = float(rel_position[0]), float(rel_position[1]), float(rel_position[2])
    horiz = math.hypot(x, y)
    if horiz > config.range_max_m:
        return False
    azimuth = math.atan2(y, x)
    if abs(azimuth) > math.radians(config.hfov_deg) / 2.0 + 1e-12:
        return False
    elevation = math.atan2(z, horiz) if horiz > 0.0 else 0.0
    return abs(elevation) <= math.radians(config.vfov_deg) / 2.0 + 1e-12


def _gate_box(config: SensorConfig, corners_sensor: np.ndarray) -> bool:
    """Apply fov_range_gate to the nearest corner of a box."""
    horiz = np.hypot(corners_sensor[:, 0], corners_sensor[:, 1])
    nearest = int(np.argmin(horiz))
    return fov_range_gate(config, corners_sensor[nearest])


# --------------------------------------------------------------------------
# radar physics

def radar_snr_db(params: RadarParams, range_m: float,
                 rcs_dbsm: float | None = None) -> float:
    """Single-target SNR from the radar range equation, in dB.

    SNR = P_tx + 2 G + 20 log10(lambda) + RCS - 30 log10(4 pi)
          - 40 log10(R) - N_floor - NF - 2 L_atm R / 1000

    with P_tx in dBm and the thermal-noise floor N_floor = 10 log10(k T0 B)
    + 30 also in dBm. Follows the R^-4 law: -12.04 dB per range doubling.
    """
    if range_m <= 0.0:
        raise ValueError("range must be positive")
    rcs = params.default_rcs_dbsm if rcs_dbsm is None else rcs_dbsm
    noise_floor_dbm = 10.0 * math.log10(
        BOLTZMANN_J_PER_K * REFERENCE_TEMP_K * params.noise_bandwidth_hz) + 30.0
    return (
        params.tx_power_dbm
        + 2.0 * params.antenna_gain_dbi
        + 20.0 * math.log10(params.wavelength_m)
        + rcs
        - 30.0 * math.log10(4.0 * math.pi)
        - 40.0 * math.log10(range_m)
        - noise_floor_dbm
        - params.noise_figure_db
        - 2.0 * params.atmospheric_loss_db_per_km * range_m / 1000.0)


def detection_confidence_from_snr(snr_db: float, threshold_db: float) -> float:
    """Logistic confidence with a 2 dB scale around the detection threshold."""
    return 1.0 / (1.0 + math.exp(-(snr_db - threshold_db) / 2.0))


# --------------------------------------------------------------------------
# occlusion

def occlusion_fraction(target_rect, target_depth: float, occluders) -> float:
    """Visible fraction of an axis-aligned rectangle behind nearer rectangles.

    target_rect is (x0, x1, y0, y1); occluders is an iterable of
    (rect, depth). Only strictly nearer occluders count. The covered area is
    computed exactly with a coordinate sweep over the x edges. A zero-area
    target is fully occluded by convention.
    """
    tx0, tx1, ty0, ty1 = target_rect
    area = (tx1 - tx0) * (ty1 - ty0)
    if area <= 0.0:
        return 0.0

    clipped = []
    for rect, depth in occluders:
        if depth >= target_depth:
            continue
        x0, x1 = max(rect[0], tx0), min(rect[1], tx1)
        y0, y1 = max(rect[2], ty0), min(rect[3], ty1)
        if x1 > x0 and y1 > y0:
            clipped.append((x0, x1, y0, y1))
    if not clipped:
        return 1.0

    edges = sorted({r[0] for r in clipped} | {r[1] for r in clipped})
    covered = 0.0
    for xa, xb in zip(edges, edges[1:]):
        if xb <= xa:
            continue
        spans = sorted((r[2], r[3]) for r in clipped if r[0] <= xa and r[1] >= xb)
        total, cur_lo, cur_hi = 0.0, None, None
        for lo, hi in spans:
            if cur_hi is None:
                cur_lo, cur_hi = lo, hi
            elif lo <= cur_hi:
                cur_hi = max(cur_hi, hi)
            else:
                total += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
        if cur_hi is not None:
            total += cur_hi - cur_lo
        covered += (xb - xa) * total
    return max(0.0, 1.0 - covered / area)


def angular_box(corners_sensor: np.ndarray):
    """(azimuth, elevation) rectangle and center depth of a sensor-frame box.

    Corner azimuths are unwrapped around the box-center azimuth so boxes do
    not straddle the +-pi seam internally.
    """
    cx = float(np.mean(corners_sensor[:, 0]))
    cy = float(np.mean(corners_sensor[:, 1]))
    center_az = math.atan2(cy, cx)
    rot = _rot2(-center_az)
    xy = corners_sensor[:, :2] @ rot.T
    az = np.arctan2(xy[:, 1], xy[:, 0]) + center_az
    horiz = np.hypot(corners_sensor[:, 0], corners_sensor[:, 1])
    el = np.arctan2(corners_sensor[:, 2], np.maximum(horiz, 1e-9))
    rect = (float(np.min(az)), float(np.max(az)), float(np.min(el)), float(np.max(el)))
    return rect, math.hypot(cx, cy)


# --------------------------------------------------------------------------
# camera physics

def camera_project(params: CameraParams, corners_camera: np.ndarray):
    """Project a camera-frame box to an axis-aligned image rectangle.

    Returns ((u0, u1, v0, v1), center_depth) in pixels, clipped to the image,
    or None when the box center is behind the image plane or the clipped
    rectangle is empty. u grows to the right, v downward; a w-meter-wide box
    centered on axis at depth z projects to w * focal / z pixels wide.
    """
    center = corners_camera.mean(axis=0)
    if center[0] <= 0.0:
        return None
    x = np.maximum(corners_camera[:, 0], 1e-6)
    u = params.h_resolution_px / 2.0 - params.focal_length_px * corners_camera[:, 1] / x
    v = params.v_resolution_px / 2.0 - params.focal_length_px * corners_camera[:, 2] / x
    u0, u1 = max(0.0, float(u.min())), min(float(params.h_resolution_px), float(u.max()))
    v0, v1 = max(0.0, float(v.min())), min(float(params.v_resolution_px), float(v.max()))
    if u1 <= u0 or v1 <= v0:
        return None
    depth = math.hypot(float(center[0]), float(center[1]))
    return (u0, u1, v0, v1), depth


def stereo_range_sigma(params: CameraParams, range_m: float) -> float:
    """First-order stereo range noise: sigma_z = z^2 sigma_d / (f b).

    Derived from z = f b / d: at 50 m with the defaults the disparity is
    5.76 px and sigma is ~4.34 m.
    """
    if range_m <= 0.0:
        raise ValueError("range must be positive")
    return range_m * range_m * params.disparity_error_px / (
        params.focal_length_px * params.baseline_m)


def stereo_disparity_px(params: CameraParams, range_m: float) -> float:
    return params.focal_length_px * params.baseline_m / range_m


# --------------------------------------------------------------------------
# measurement

def quantize(value: float, resolution: float) -> float:
    """Round to the nearest multiple of resolution (idempotent)."""
    if resolution <= 0.0:
        return value
    return round(value / resolution) * resolution


@dataclass(frozen=True)
class _Candidate:
    vehicle_id: str
    range_m: float          # true ground-plane range, sensor to center
    azimuth_rad: float      # true azimuth
    rel_speed_mps: float    # radial closing(+away) rate
    confidence: float


def _frame_geometry(log: GroundTruthLog, config: SensorConfig, index: int):
    """Sensor pose plus per-vehicle sensor-frame corners at one sim frame."""
    ego = log.vehicles[log.ego_id]
    ego_yaw = float(ego.yaw_rad[index])
    rot = _rot2(ego_yaw)
    mount_xy = rot @ np.array([config.mount.x_m, config.mount.y_m])
    sensor_pos = (float(ego.x_m[index] + mount_xy[0]),
                  float(ego.y_m[index] + mount_xy[1]),
                  config.mount.z_m)
    sensor_yaw = ego_yaw + config.mount.yaw_rad

    boxes = {}
    for vid, states in log.vehicles.items():
        if vid == log.ego_id:
            continue
        spec = log.specs[vid]
        corners = box_corners(
            (float(states.x_m[index]), float(states.y_m[index])),
            float(states.yaw_rad[index]),
            (spec.length_m, spec.width_m, spec.height_m))
        boxes[vid] = _sensor_frame(corners, sensor_pos, sensor_yaw)
    return sensor_pos, sensor_yaw, boxes


def _true_measurement(log, config, index, vid, sensor_pos, sensor_yaw):
    states = log.vehicles[vid]
    dx = float(states.x_m[index]) - sensor_pos[0]
    dy = float(states.y_m[index]) - sensor_pos[1]
    rng_true = math.hypot(dx, dy)
    azimuth = math.atan2(dy, dx) - sensor_yaw
    azimuth = math.atan2(math.sin(azimuth), math.cos(azimuth))

    ego = log.vehicles[log.ego_id]
    vx_e, vy_e = (float(ego.speed_mps[index] * math.cos(ego.yaw_rad[index])),
                  float(ego.speed_mps[index] * math.sin(ego.yaw_rad[index])))
    vx_v, vy_v = (float(states.speed_mps[index] * math.cos(states.yaw_rad[index])),
                  float(states.speed_mps[index] * math.sin(states.yaw_rad[index])))
    if rng_true > 0.0:
        rel_speed = ((vx_v - vx_e) * dx + (vy_v - vy_e) * dy) / rng_true
    else:
        rel_speed = 0.0
    return rng_true, azimuth, rel_speed


def radar_measure(log: GroundTruthLog, config: SensorConfig, index: int,
                  rng: np.random.Generator) -> list:
    """Radar candidates for one sim frame.

    A vehicle is measurable when its nearest box corner passes the FOV/range
    gate and its occlusion-attenuated SNR reaches the detection threshold.
    Range, azimuth and radial speed get Gaussian noise at the configured
    accuracies, then snap to the resolution grid; noise_enabled=False skips
    both. Confidence is logistic in the SNR margin and is deterministic.
    """
    params = config.radar
    sensor_pos, sensor_yaw, boxes = _frame_geometry(log, config, index)
    angular = {vid: angular_box(c) for vid, c in boxes.items()}

    out = []
    for vid in sorted(boxes):
        if not _gate_box(config, boxes[vid]):
            continue
        rng_true, azimuth, rel_speed = _true_measurement(
            log, config, index, vid, sensor_pos, sensor_yaw)
        rect, depth = angular[vid]
        occluders = [angular[o] for o in angular if o != vid]
        visible = occlusion_fraction(rect, depth, occluders)
        snr = radar_snr_db(params, rng_true) + 10.0 * math.log10(
            max(visible, RADAR_VISIBLE_FLOOR))
        if snr < params.snr_threshold_db:
            continue
        if config.noise_enabled:
            rng_meas = rng_true + rng.normal(0.0, params.dist_accuracy_m)
            az_meas = azimuth + rng.normal(0.0, math.radians(params.azimuth_accuracy_deg))
            sp_meas = rel_speed + rng.normal(0.0, params.speed_accuracy_kmh / 3.6)
            rng_meas = quantize(rng_meas, params.dist_resolution_m)
            az_meas = quantize(az_meas, math.radians(params.azimuth_resolution_deg))
            sp_meas = quantize(sp_meas, params.speed_resolution_kmh / 3.6)
        else:
            rng_meas, az_meas, sp_meas = rng_true, azimuth, rel_speed
        confidence = detection_confidence_from_snr(snr, params.snr_threshold_db)
        out.append(_Candidate(vid, rng_meas, az_meas, sp_meas, confidence))
    return out


def camera_measure(log: GroundTruthLog, config: SensorConfig, index: int,
                   rng: np.random.Generator) -> list:
    """Camera candidates for one sim frame.

    Confidence equals the visible fraction of the projected bounding box
    against strictly nearer boxes (deterministic). Range noise follows the
    stereo sigma at the true range; azimuth noise is one pixel equivalent.
    Radial speed is passed through untouched.
    """
    params = config.camera
    sensor_pos, sensor_yaw, boxes = _frame_geometry(log, config, index)
    projected = {}
    for vid, corners in boxes.items():
        proj = camera_project(params, corners)
        if proj is not None:
            projected[vid] = proj

    out = []
    for vid in sorted(boxes):
        if vid not in projected:
            continue
        if not _gate_box(config, boxes[vid]):
            continue
        rect, depth = projected[vid]
        occluders = [projected[o] for o in projected if o != vid]
        visible = occlusion_fraction(rect, depth, occluders)
        rng_true, azimuth, rel_speed = _true_measurement(
            log, config, index, vid, sensor_pos, sensor_yaw)
        if config.noise_enabled:
            rng_meas = rng_true + rng.normal(0.0, stereo_range_sigma(params, rng_true))
            az_meas = azimuth + rng.normal(0.0, 1.0 / params.focal_length_px)
        else:
            rng_meas, az_meas = rng_true, azimuth
        out.append(_Candidate(vid, rng_meas, az_meas, rel_speed, visible))
    return out


def detect(candidates: list, config: SensorConfig,
           params: DetectionParams, t: float, sim_index: int) -> DetectionFrame:
    """Threshold candidates and map them into the ego frame."""
    rot = _rot2(config.mount.yaw_rad)
    entries = []
    for c in candidates:
        if c.confidence < params.confidence_threshold:
            continue
        px = c.range_m * math.cos(c.azimuth_rad)
        py = c.range_m * math.sin(c.azimuth_rad)
        ego_xy = rot @ np.array([px, py]) + np.array([config.mount.x_m, config.mount.y_m])
        entries.append(DetectionEntry(
            vehicle_id=c.vehicle_id, range_m=c.range_m, azimuth_rad=c.azimuth_rad,
            rel_speed_mps=c.rel_speed_mps, x_ego_m=float(ego_xy[0]),
            y_ego_m=float(ego_xy[1]), confidence=c.confidence))
    entries.sort(key=lambda e: e.vehicle_id)
    return DetectionFrame(t=t, sim_index=sim_index, entries=tuple(entries))


def sensor_stride(config: SensorConfig, sim_step_s: float) -> int:
    stride = int(round(config.cycle_time_ms / 1000.0 / sim_step_s))
    if stride < 1 or abs(stride * sim_step_s * 1000.0 - config.cycle_time_ms) > 1e-6:
        raise ValueError("sensor cycle time must be a multiple of the sim step")
    return stride


def sense(log: GroundTruthLog, config: SensorConfig,
          params: DetectionParams | None = None) -> DetectionSet:
    """Run a sensor over a ground-truth log.

    Frames land on the sensor cycle grid (every cycle_time from t=0). The
    measurement RNG is seeded from config.seed, so equal configs reproduce
    identical detection streams byte for byte.
    """
    params = params or DetectionParams()
    stride = sensor_stride(config, log.sim_step_s)
    measure = radar_measure if config.modality == "radar" else camera_measure
    rng = np.random.default_rng(config.seed)
    frames = []
    for index in range(0, log.n_frames, stride):
        candidates = measure(log, config, index, rng)
        frames.append(detect(candidates, config, params,
                             t=float(log.times_s[index]), sim_index=index))
    return DetectionSet(sensor_id=config.sensor_id, config=config,
                        stride=stride, frames=tuple(frames))
