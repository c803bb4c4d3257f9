"""Track assembly: from ground truth or detections to prediction-model inputs.

Histories are fixed-length windows at the model rate (default 16 frames at
5 Hz, so 3 s including the current frame). Positions are sampled
latest-sample-hold from the sensor cycle grid for both sources, so an ideal
sensor reproduces the ground-truth input exactly. Missing detections become
present=False frames; zero-filling is never applied here. Neighbor context is
a 13x3 grid around the target: 4.57 m longitudinal bins over +-27.43 m, one
column per adjacent lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .road import road_angle, to_frenet
from .scenario import GroundTruthLog
from .sensors import DetectionSet

HISTORY_FRAMES = 16
MODEL_RATE_HZ = 5.0
HORIZON_STEPS = 25
NEIGHBOR_BOUNDARY_M = 27.43    # 90 ft
GRID_ROWS = 13
GRID_COLS = 3
GRID_BIN_M = 4.57              # 15 ft
GRID_CENTER_ROW = GRID_ROWS // 2


class TargetNeverDetectedError(ValueError):
    """The target has zero present frames in the requested window."""


@dataclass(frozen=True)
class TrackHistory:
    vehicle_id: str
    times_s: np.ndarray
    x_m: np.ndarray
    y_m: np.ndarray
    present: np.ndarray    # bool per frame
    frame: str = "global"  # "global" | "target"

    def __post_init__(self):
        n = len(self.times_s)
        if not (len(self.x_m) == len(self.y_m) == len(self.present) == n):
            raise ValueError("track arrays must share one length")
        if n >= 2:
            dt = np.diff(self.times_s)
            if np.any(np.abs(dt - dt[0]) > 1e-9) or dt[0] <= 0.0:
                raise ValueError("track frames must be uniformly spaced in time")

    @property
    def n_frames(self) -> int:
        return len(self.times_s)

    @property
    def present_count(self) -> int:
        return int(np.sum(self.present))

    def last_present_index(self) -> int:
        idx = np.flatnonzero(self.present)
        if len(idx) == 0:
            raise TargetNeverDetectedError(f"{self.vehicle_id}: no present frames")
        return int(idx[-1])


def impute_linear(track: TrackHistory) -> TrackHistory:
    """Fill missing frames: linear interpolation inside, hold at the edges.

    Interior gaps take the per-axis linear interpolation between the nearest
    present frames; leading/trailing gaps hold the nearest present value.
    Needs at least two present frames. Idempotent; present frames keep their
    exact values and the result is fully present.
    """
    if track.present_count < 2:
        raise ValueError("imputation needs at least two present frames")
    if track.present_count == track.n_frames:
        return track
    idx = np.flatnonzero(track.present)
    t_known = track.times_s[idx]
    x = np.interp(track.times_s, t_known, track.x_m[idx])
    y = np.interp(track.times_s, t_known, track.y_m[idx])
    x[idx] = track.x_m[idx]
    y[idx] = track.y_m[idx]
    return replace(track, x_m=x, y_m=y,
                   present=np.ones(track.n_frames, dtype=bool))


@dataclass(frozen=True)
class ReferencePose:
    """Target anchor pose: position plus road-tangent heading at its station."""
    x_m: float
    y_m: float
    angle_rad: float

    def to_local(self, x, y):
        dx = np.asarray(x, dtype=float) - self.x_m
        dy = np.asarray(y, dtype=float) - self.y_m
        c, s = math.cos(-self.angle_rad), math.sin(-self.angle_rad)
        return c * dx - s * dy, s * dx + c * dy

    def to_world(self, x, y):
        c, s = math.cos(self.angle_rad), math.sin(self.angle_rad)
        xl = np.asarray(x, dtype=float)
        yl = np.asarray(y, dtype=float)
        return c * xl - s * yl + self.x_m, s * xl + c * yl + self.y_m


def to_target_frame(track: TrackHistory, pose: ReferencePose) -> TrackHistory:
    """Rotate/translate a global track into the target frame (x = road tangent)."""
    if track.frame != "global":
        raise ValueError("track is not in the global frame")
    x, y = pose.to_local(track.x_m, track.y_m)
    absent = ~track.present
    x[absent] = 0.0
    y[absent] = 0.0
    return replace(track, x_m=x, y_m=y, frame="target")


@dataclass(frozen=True)
class LaneContext:
    """Road knowledge handed to in-process predictors (not on the wire)."""
    lane_width_m: float
    offset_in_lane_m: float   # target lateral offset from its lane center, +left
    lanes_left: int           # drivable lanes to the target's left
    lanes_right: int


@dataclass(frozen=True)
class NeighborGrid:
    target: TrackHistory
    cells: dict  # (row, col) -> TrackHistory, target frame

    def occupied(self, row: int, col: int) -> bool:
        return (row, col) in self.cells


@dataclass(frozen=True)
class ModelInput:
    scenario_id: str
    t: float
    grid: NeighborGrid
    rate_hz: float = MODEL_RATE_HZ
    horizon: int = HORIZON_STEPS
    reference: ReferencePose | None = None
    lane_context: LaneContext | None = None

    def to_request(self, request_id: int) -> dict:
        """Wire-protocol predict request (the persisted model-input schema)."""
        tgt = self.grid.target
        target_rows = [
            [float(t), float(x), float(y), int(p)]
            for t, x, y, p in zip(tgt.times_s, tgt.x_m, tgt.y_m, tgt.present)]
        neighbors = []
        for (row, col) in sorted(self.grid.cells):
            tr = self.grid.cells[(row, col)]
            neighbors.append({
                "cell": [row, col],
                "track": [[float(t), float(x), float(y), int(p)]
                          for t, x, y, p in zip(tr.times_s, tr.x_m, tr.y_m, tr.present)],
            })
        return {
            "type": "predict",
            "id": request_id,
            "rate_hz": self.rate_hz,
            "horizon": self.horizon,
            "target": target_rows,
            "neighbors": neighbors,
        }


class TrackSource:
    """Uniform sampling interface over ground truth or a detection stream.

    Both sources report positions on the sensor cycle grid (stride sim frames
    per sensor frame) and hold the latest sample between cycles.
    """

    def __init__(self, log: GroundTruthLog, detections: DetectionSet | None = None,
                 stride: int | None = None):
        self.log = log
        self.detections = detections
        if detections is not None:
            self.stride = detections.stride
            self._frames = {f.sim_index: f for f in detections.frames}
        else:
            if stride is None:
                raise ValueError("ground-truth source needs an explicit stride")
            self.stride = stride
        self.kind = "detections" if detections is not None else "ground_truth"

    def held_index(self, sim_index: int) -> int:
        return (sim_index // self.stride) * self.stride

    def positions_at(self, sim_index: int) -> dict:
        """vehicle_id -> global (x, y) at the held sensor frame."""
        held = self.held_index(sim_index)
        if self.detections is None:
            return {
                vid: (float(st.x_m[held]), float(st.y_m[held]))
                for vid, st in self.log.vehicles.items()}
        frame = self._frames.get(held)
        if frame is None:
            return {}
        ego = self.log.vehicles[self.log.ego_id]
        yaw = float(ego.yaw_rad[held])
        c, s = math.cos(yaw), math.sin(yaw)
        ex, ey = float(ego.x_m[held]), float(ego.y_m[held])
        return {
            e.vehicle_id: (c * e.x_ego_m - s * e.y_ego_m + ex,
                           s * e.x_ego_m + c * e.y_ego_m + ey)
            for e in frame.entries}


def model_step(log: GroundTruthLog, rate_hz: float = MODEL_RATE_HZ) -> int:
    """Sim frames per model frame; the rate must divide the sim grid."""
    step = 1.0 / (rate_hz * log.sim_step_s)
    if abs(step - round(step)) > 1e-9:
        raise ValueError("model rate must land on the sim step grid")
    return int(round(step))


def window_indices(log: GroundTruthLog, t: float, history: int = HISTORY_FRAMES,
                   rate_hz: float = MODEL_RATE_HZ) -> np.ndarray:
    """Sim indices of the history window ending at t (uniform model grid)."""
    step = model_step(log, rate_hz)
    t_idx = log.frame_index(t)
    first = t_idx - step * (history - 1)
    if first < 0:
        raise ValueError(f"history window at t={t} s starts before the log")
    return t_idx - step * np.arange(history - 1, -1, -1)


def sensor_window(source: TrackSource, vehicle_id: str,
                  indices: np.ndarray) -> TrackHistory:
    """One vehicle's track on the sensor-cycle grid spanning a model window.

    Frames sit at the sensor cycle times themselves (every `stride` sim
    frames), so each present sample carries its true capture time rather
    than a model-grid hold time.
    """
    stride = source.stride
    first = source.held_index(int(indices[0]))
    last = source.held_index(int(indices[-1]))
    sensor_indices = np.arange(first, last + 1, stride)
    n = len(sensor_indices)
    xs = np.zeros(n)
    ys = np.zeros(n)
    present = np.zeros(n, dtype=bool)
    for j, idx in enumerate(sensor_indices):
        pos = source.positions_at(int(idx)).get(vehicle_id)
        if pos is not None:
            xs[j], ys[j] = pos
            present[j] = True
    times = source.log.times_s[sensor_indices]
    return TrackHistory(vehicle_id=vehicle_id, times_s=np.asarray(times, dtype=float),
                        x_m=xs, y_m=ys, present=present)


def track_window(source: TrackSource, vehicle_id: str, indices: np.ndarray,
                 imputation: str = "none") -> TrackHistory:
    """Latest-sample-hold window for one vehicle, global frame.

    With imputation="linear", gaps are filled on the sensor-cycle stream
    first — where samples sit at their true capture times — and the filled
    stream is then hold-resampled onto the model grid. Filling after the
    resample would interpolate against nominal model times and so disagree
    with the hold timing of the frames that were actually observed. Tracks
    with fewer than two detections in the window are left unfilled.
    """
    if imputation not in ("none", "linear"):
        raise ValueError(f"unknown imputation policy {imputation!r}")
    track = sensor_window(source, vehicle_id, indices)
    if imputation == "linear" and track.present_count >= 2:
        track = impute_linear(track)
    stride = source.stride
    idx = np.asarray(indices, dtype=int)
    slots = idx // stride - int(indices[0]) // stride
    times = source.log.times_s[idx]
    return TrackHistory(vehicle_id=vehicle_id, times_s=np.asarray(times, dtype=float),
                        x_m=track.x_m[slots].copy(), y_m=track.y_m[slots].copy(),
                        present=track.present[slots].copy())


def select_neighbors(source: TrackSource, target_id: str, t: float) -> list:
    """Vehicle ids within +-27.43 m longitudinally and one lane laterally.

    Distances are Frenet (along-road station, lane index) computed from the
    source's positions at time t. The target itself is excluded; vehicles the
    source cannot see at t are not neighbors.
    """
    log = source.log
    road = log.road
    sim_index = log.frame_index(t)
    positions = source.positions_at(sim_index)
    if target_id not in positions:
        raise TargetNeverDetectedError(f"{target_id} not visible at t={t} s")
    ts, td = to_frenet(road, *positions[target_id])
    target_lane = int(road.lane_of(td))
    out = []
    for vid, (x, y) in positions.items():
        if vid == target_id:
            continue
        s, d = to_frenet(road, x, y)
        if abs(float(s) - float(ts)) > NEIGHBOR_BOUNDARY_M:
            continue
        if abs(int(road.lane_of(d)) - target_lane) > 1:
            continue
        out.append(vid)
    return sorted(out)


def grid_cell(delta_station_m: float, delta_lane: int) -> tuple | None:
    """Grid cell for a neighbor at a Frenet offset from the target.

    Rows bin the longitudinal offset every 4.57 m, row 6 centered on the
    target, row 12 farthest ahead. An offset exactly on a bin boundary goes
    to the row nearer the target; the residual tie at the boundary between
    rows k and k+1 resolves to the lower row index. Columns: 0 = right lane,
    1 = same lane, 2 = left lane.
    """
    if abs(delta_lane) > 1:
        return None
    row_offset = math.ceil(delta_station_m / GRID_BIN_M - 0.5)
    if abs(row_offset) > GRID_CENTER_ROW:
        return None
    return GRID_CENTER_ROW + row_offset, 1 + delta_lane


def assemble_history(source: TrackSource, target_id: str, t: float,
                     history: int = HISTORY_FRAMES, rate_hz: float = MODEL_RATE_HZ,
                     horizon: int = HORIZON_STEPS,
                     imputation: str = "none") -> ModelInput:
    """Build the prediction input for one target at one prediction time.

    Raises TargetNeverDetectedError when the target has zero present frames
    in the window. With imputation="linear", the target track and every
    neighbor track with at least two detections in the window are filled on
    the sensor-cycle stream (see track_window) before conversion to the
    target frame.
    """
    if imputation not in ("none", "linear"):
        raise ValueError(f"unknown imputation policy {imputation!r}")
    log = source.log
    road = log.road
    indices = window_indices(log, t, history, rate_hz)

    target_track = track_window(source, target_id, indices, imputation)
    if target_track.present_count == 0:
        raise TargetNeverDetectedError(
            f"{target_id} never detected in the window ending at t={t} s")

    neighbor_ids = _neighbors_with_fallback(source, target_id, t)
    neighbor_tracks = {vid: track_window(source, vid, indices, imputation)
                       for vid in neighbor_ids}
    neighbor_tracks = {vid: tr for vid, tr in neighbor_tracks.items()
                       if tr.present_count > 0}

    anchor = target_track.last_present_index()
    ax, ay = float(target_track.x_m[anchor]), float(target_track.y_m[anchor])
    station, lateral = to_frenet(road, ax, ay)
    pose = ReferencePose(ax, ay, float(road_angle(road, float(station))))

    target_lane = int(road.lane_of(float(lateral)))
    context = LaneContext(
        lane_width_m=road.lane_width_m,
        offset_in_lane_m=float(lateral) - road.lane_center(target_lane),
        lanes_left=road.lane_count - 1 - target_lane,
        lanes_right=target_lane)

    cells: dict = {}
    claims: dict = {}
    for vid in sorted(neighbor_tracks):
        tr = neighbor_tracks[vid]
        last = tr.last_present_index()
        s, d = to_frenet(road, float(tr.x_m[last]), float(tr.y_m[last]))
        ds = float(s) - float(station)
        dlane = int(road.lane_of(float(d))) - target_lane
        cell = grid_cell(ds, dlane)
        if cell is None:
            continue
        # Stale tracks can collide on a cell; keep the vehicle nearest the
        # target (then lowest id, via the sorted iteration order).
        if cell in claims and claims[cell] <= abs(ds):
            continue
        claims[cell] = abs(ds)
        cells[cell] = to_target_frame(tr, pose)

    grid = NeighborGrid(target=to_target_frame(target_track, pose), cells=cells)
    return ModelInput(scenario_id=log.scenario_id, t=t, grid=grid, rate_hz=rate_hz,
                      horizon=horizon, reference=pose, lane_context=context)


def _neighbors_with_fallback(source: TrackSource, target_id: str, t: float) -> list:
    """Neighbor selection at t, falling back to the target's last seen frame."""
    try:
        return select_neighbors(source, target_id, t)
    except TargetNeverDetectedError:
        log = source.log
        step = model_step(log)
        sim_index = log.frame_index(t)
        for back in range(1, HISTORY_FRAMES):
            idx = sim_index - back * step
            if idx < 0:
                break
            t_back = float(log.times_s[idx])
            try:
                return select_neighbors(source, target_id, t_back)
            except TargetNeverDetectedError:
                continue
        return []
