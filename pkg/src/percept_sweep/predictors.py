"""Trajectory predictors emitting per-step bivariate Gaussians.

Built-ins fit only the present frames of the target history (never the
sentinel zeros of missing frames) and extrapolate in the target frame:

* constant_velocity: per-axis linear least squares over time.
* constant_acceleration: per-axis quadratic least squares (linear when only
  two frames are present).
* social_grid: constant-velocity longitudinal motion blended with a quintic
  lateral completion toward the inferred destination lane center, weighted
  by maneuver probabilities classified from recent lateral velocity and
  vetoed by occupied adjacent grid cells.

External predictors speak the newline-delimited JSON wire protocol (see
percept_sweep.wire).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .road import quintic_step
from .tracks import GRID_CENTER_ROW, ModelInput, TrackHistory

SIGMA_FLOOR_M = 0.1
MANEUVER_CLASSES = ("keep", "lc_left", "lc_right")
LATERAL_RATE_THRESHOLD_MPS = 0.2   # |v_lat| above this favors a lane change
LATERAL_RATE_SCALE_MPS = 0.1       # softmax evidence scale
CLASSIFIER_WINDOW_S = 1.0
COMPLETION_TIME_S = 5.0            # full-lane lateral completion time
PREDICTOR_KINDS = ("constant_velocity", "constant_acceleration", "social_grid",
                   "external")
_KIND_ALIASES = {
    "cv": "constant_velocity",
    "ca": "constant_acceleration",
    "social": "social_grid",
}


class PredictionError(ValueError):
    """A predictor could not produce a valid trajectory for this input."""


@dataclass(frozen=True)
class PredictorId:
    kind: str
    endpoint: str | None = None  # external only: command line or tcp:host:port

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in PREDICTOR_KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if (kind == "external") != (self.endpoint is not None):
            raise ValueError("exactly the external predictor takes an endpoint")

    @classmethod
    def parse(cls, text: str) -> "PredictorId":
        if text.startswith("external:"):
            return cls("external", text.split(":", 1)[1])
        return cls(text)

    @property
    def label(self) -> str:
        return self.kind if self.endpoint is None else f"external:{self.endpoint}"


@dataclass(frozen=True)
class GaussianStep:
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    rho: float

    def validate(self) -> None:
        values = (self.mu_x, self.mu_y, self.sigma_x, self.sigma_y, self.rho)
        if not all(math.isfinite(v) for v in values):
            raise PredictionError("non-finite Gaussian parameter")
        if self.sigma_x <= 0.0 or self.sigma_y <= 0.0:
            raise PredictionError("sigma must be positive")
        if not -1.0 < self.rho < 1.0:
            raise PredictionError("|rho| must be < 1")


@dataclass(frozen=True)
class GaussianTrajectory:
    steps: tuple  # tuple[GaussianStep]
    maneuver_probs: tuple | None = None  # ((label, p), ...) or None

    def validate(self, horizon: int) -> None:
        if len(self.steps) != horizon:
            raise PredictionError(
                f"expected {horizon} steps, got {len(self.steps)}")
        for step in self.steps:
            step.validate()
        if self.maneuver_probs is not None:
            total = sum(p for _, p in self.maneuver_probs)
            if abs(total - 1.0) > 1e-6 or any(p < 0.0 for _, p in self.maneuver_probs):
                raise PredictionError("maneuver probabilities must be a distribution")

    def means(self) -> np.ndarray:
        return np.array([[s.mu_x, s.mu_y] for s in self.steps])


def _fit_axis(times: np.ndarray, values: np.ndarray, degree: int):
    """Least-squares polynomial fit; returns (coeffs low->high, residual rms)."""
    t0 = times[-1]
    dt = times - t0
    cols = [np.ones_like(dt)]
    for k in range(1, degree + 1):
        cols.append(dt ** k)
    design = np.column_stack(cols)
    coeffs, _, _, _ = np.linalg.lstsq(design, values, rcond=None)
    resid = values - design @ coeffs
    rms = float(np.sqrt(np.mean(resid * resid)))
    return coeffs, rms, t0


def _present_fit(track: TrackHistory, degree: int):
    idx = np.flatnonzero(track.present)
    if len(idx) < 2:
        raise PredictionError("need at least two present frames to fit")
    times = track.times_s[idx]
    if float(np.ptp(times)) <= 0.0:
        raise PredictionError("all present frames share one timestamp")
    deg = min(degree, len(idx) - 1)
    fx = _fit_axis(times, track.x_m[idx], deg)
    fy = _fit_axis(times, track.y_m[idx], deg)
    return fx, fy


def _eval_poly(coeffs: np.ndarray, dt) -> np.ndarray:
    out = np.zeros_like(np.asarray(dt, dtype=float))
    for k, c in enumerate(coeffs):
        out = out + c * np.asarray(dt, dtype=float) ** k
    return out


def _sigma(rms: float, k: np.ndarray) -> np.ndarray:
    return np.maximum(k * rms, SIGMA_FLOOR_M)


def cv_fit(track: TrackHistory):
    """Constant-velocity fit over present frames.

    Returns ((vx, vy), (rms_x, rms_y)). A perfect linear track has zero
    residual, so predicted sigmas sit at the 0.1 m floor for every step.
    """
    (cx, rms_x, _), (cy, rms_y, _) = _present_fit(track, degree=1)
    vx = float(cx[1]) if len(cx) > 1 else 0.0
    vy = float(cy[1]) if len(cy) > 1 else 0.0
    return (vx, vy), (rms_x, rms_y)


def _polynomial_trajectory(model_input: ModelInput, degree: int) -> GaussianTrajectory:
    track = model_input.grid.target
    (cx, rms_x, t0), (cy, rms_y, _) = _present_fit(track, degree)
    k = np.arange(1, model_input.horizon + 1, dtype=float)
    dt = (model_input.t - t0) + k / model_input.rate_hz
    mx = _eval_poly(cx, dt)
    my = _eval_poly(cy, dt)
    sx = _sigma(rms_x, k)
    sy = _sigma(rms_y, k)
    steps = tuple(
        GaussianStep(float(mx[i]), float(my[i]), float(sx[i]), float(sy[i]), 0.0)
        for i in range(model_input.horizon))
    return GaussianTrajectory(steps=steps)


def predict_constant_velocity(model_input: ModelInput) -> GaussianTrajectory:
    return _polynomial_trajectory(model_input, degree=1)


def predict_constant_acceleration(model_input: ModelInput) -> GaussianTrajectory:
    """Quadratic extrapolation; degrades to linear with two present frames."""
    return _polynomial_trajectory(model_input, degree=2)


def _lateral_rate(track: TrackHistory, t: float) -> float:
    """Lateral velocity from present frames in the trailing classifier window."""
    idx = np.flatnonzero(track.present)
    recent = idx[track.times_s[idx] >= t - CLASSIFIER_WINDOW_S - 1e-9]
    use = recent if len(recent) >= 2 else idx
    if len(use) < 2:
        return 0.0
    times = track.times_s[use]
    if float(np.ptp(times)) <= 0.0:
        return 0.0
    coeffs, _, _ = _fit_axis(times, track.y_m[use], degree=1)
    return float(coeffs[1]) if len(coeffs) > 1 else 0.0


def classify_maneuver(model_input: ModelInput) -> dict:
    """Softmax maneuver probabilities from lateral velocity, with cell vetoes.

    Evidence is (v_lat - threshold) / scale for lc_left, the mirror for
    lc_right, and zero for keep. An occupied adjacent-lane cell beside the
    target (rows 5..7) reassigns that lane-change probability to keep: with
    zero lateral velocity and both sides occupied, keep gets probability 1.
    """
    v_lat = _lateral_rate(model_input.grid.target, model_input.t)
    e_keep = 0.0
    e_left = (v_lat - LATERAL_RATE_THRESHOLD_MPS) / LATERAL_RATE_SCALE_MPS
    e_right = (-v_lat - LATERAL_RATE_THRESHOLD_MPS) / LATERAL_RATE_SCALE_MPS
    peak = max(e_keep, e_left, e_right)
    w = {
        "keep": math.exp(e_keep - peak),
        "lc_left": math.exp(e_left - peak),
        "lc_right": math.exp(e_right - peak),
    }
    total = sum(w.values())
    probs = {c: w[c] / total for c in MANEUVER_CLASSES}

    grid = model_input.grid
    adjacent_rows = (GRID_CENTER_ROW - 1, GRID_CENTER_ROW, GRID_CENTER_ROW + 1)
    left_blocked = any(grid.occupied(r, 2) for r in adjacent_rows)
    right_blocked = any(grid.occupied(r, 0) for r in adjacent_rows)
    context = model_input.lane_context
    if context is not None:
        left_blocked = left_blocked or context.lanes_left == 0
        right_blocked = right_blocked or context.lanes_right == 0
    if left_blocked:
        probs["keep"] += probs.pop("lc_left")
        probs["lc_left"] = 0.0
    if right_blocked:
        probs["keep"] += probs.pop("lc_right")
        probs["lc_right"] = 0.0
    return probs


def predict_social_grid(model_input: ModelInput) -> GaussianTrajectory:
    track = model_input.grid.target
    (cx, rms_x, t0), (_, rms_y, _) = _present_fit(track, degree=1)
    probs = classify_maneuver(model_input)

    context = model_input.lane_context
    lane_width = context.lane_width_m if context is not None else 3.6
    offset = context.offset_in_lane_m if context is not None else 0.0

    k = np.arange(1, model_input.horizon + 1, dtype=float)
    dt_fit = (model_input.t - t0) + k / model_input.rate_hz
    mx = _eval_poly(cx, dt_fit)

    horizon_t = k / model_input.rate_hz
    destinations = {
        "keep": -offset,
        "lc_left": -offset + lane_width,
        "lc_right": -offset - lane_width,
    }
    lateral_paths = {}
    for cls, dest in destinations.items():
        completion = COMPLETION_TIME_S * abs(dest) / lane_width
        completion = min(max(completion, 0.5), COMPLETION_TIME_S)
        lateral_paths[cls] = dest * quintic_step(horizon_t / completion)

    my = sum(probs[c] * lateral_paths[c] for c in MANEUVER_CLASSES)
    spread = np.sqrt(sum(
        probs[c] * (lateral_paths[c] - my) ** 2 for c in MANEUVER_CLASSES))
    sx = _sigma(rms_x, k)
    sy = np.maximum(_sigma(rms_y, k), spread)

    steps = tuple(
        GaussianStep(float(mx[i]), float(my[i]), float(sx[i]), float(sy[i]), 0.0)
        for i in range(model_input.horizon))
    maneuver = tuple((c, probs[c]) for c in MANEUVER_CLASSES)
    return GaussianTrajectory(steps=steps, maneuver_probs=maneuver)


def predict(predictor: PredictorId, model_input: ModelInput,
            external_client=None) -> GaussianTrajectory:
    """Dispatch to a predictor and validate the output contract."""
    if predictor.kind == "external":
        if external_client is None:
            raise PredictionError("external predictor needs a connected client")
        trajectory = external_client.predict(model_input)
    elif predictor.kind == "constant_velocity":
        trajectory = predict_constant_velocity(model_input)
    elif predictor.kind == "constant_acceleration":
        trajectory = predict_constant_acceleration(model_input)
    else:
        trajectory = predict_social_grid(model_input)
    trajectory.validate(model_input.horizon)
    return trajectory
