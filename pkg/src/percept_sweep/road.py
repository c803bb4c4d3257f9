"""Road geometry: straight and constant-radius arc roads with Frenet transforms.

Conventions used throughout the package:

* The road reference line is the right edge of the drivable area. Lanes are
  indexed 0..lane_count-1 from right to left; lane k is centered at lateral
  offset (k + 0.5) * lane_width_m.
* Station s is arc length along the reference line, lateral d is measured to
  the left of it. Arc roads turn left with curvature 1 / arc_radius_m.
* Straight roads start at the global origin heading +x. Arc roads start at
  the origin heading +x with the curvature center at (0, arc_radius_m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ROAD_KINDS = ("straight", "arc")


@dataclass(frozen=True)
class RoadGeometry:
    kind: str
    lane_count: int
    lane_width_m: float
    length_m: float
    arc_radius_m: float | None = None  # required for kind == "arc"

    def __post_init__(self):
        if self.kind not in ROAD_KINDS:
            raise ValueError(f"unknown road kind {self.kind!r}")
        if self.lane_count < 1:
            raise ValueError("lane_count must be >= 1")
        if self.lane_width_m <= 0.0:
            raise ValueError("lane_width_m must be positive")
        if self.length_m <= 0.0:
            raise ValueError("length_m must be positive")
        if self.kind == "arc":
            if self.arc_radius_m is None or self.arc_radius_m <= 100.0:
                raise ValueError("arc roads need arc_radius_m > 100 (highway-"
                                 "scale curvature; tighter arcs break the "
                                 "lane-offset small-angle assumptions)")

    @property
    def width_m(self) -> float:
        return self.lane_count * self.lane_width_m

    @property
    def curvature(self) -> float:
        return 0.0 if self.kind == "straight" else 1.0 / self.arc_radius_m

    def lane_center(self, lane: int) -> float:
        """Lateral offset of a lane center from the reference line."""
        if not 0 <= lane < self.lane_count:
            raise ValueError(f"lane {lane} outside 0..{self.lane_count - 1}")
        return (lane + 0.5) * self.lane_width_m

    def lane_of(self, lateral_m) -> np.ndarray:
        """Nearest lane index for a lateral offset (clipped to the road)."""
        idx = np.floor(np.asarray(lateral_m, dtype=float) / self.lane_width_m)
        return np.clip(idx, 0, self.lane_count - 1).astype(int)


def road_angle(road: RoadGeometry, station_m) -> np.ndarray | float:
    """Tangent heading of the road at a station, relative to the start heading.

    Straight roads return 0; arc roads return station / arc_radius. Raises if
    any station falls outside [0, length_m].
    """
    s = np.asarray(station_m, dtype=float)
    if np.any(s < -1e-9) or np.any(s > road.length_m + 1e-9):
        bad = float(np.ravel(s[(s < -1e-9) | (s > road.length_m + 1e-9)])[0])
        raise ValueError(f"station {bad:.3f} m outside road [0, {road.length_m}]")
    if road.kind == "straight":
        out = np.zeros_like(s)
    else:
        out = s / road.arc_radius_m
    return float(out) if np.isscalar(station_m) else out


def to_global(road: RoadGeometry, station_m, lateral_m):
    """Frenet (station, lateral) -> global (x, y). Vectorized."""
    s = np.asarray(station_m, dtype=float)
    d = np.asarray(lateral_m, dtype=float)
    if road.kind == "straight":
        return s.copy(), d.copy()
    r = road.arc_radius_m
    theta = s / r
    x = (r - d) * np.sin(theta)
    y = r - (r - d) * np.cos(theta)
    return x, y


def to_frenet(road: RoadGeometry, x, y):
    """Global (x, y) -> Frenet (station, lateral). Inverse of to_global."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if road.kind == "straight":
        return x.copy(), y.copy()
    r = road.arc_radius_m
    vx = x
    vy = y - r
    radius_p = np.hypot(vx, vy)
    theta = np.arctan2(vx, -vy)
    return theta * r, r - radius_p


def quintic_step(tau) -> np.ndarray | float:
    """Quintic smoothstep 10*tau^3 - 15*tau^4 + 6*tau^5, clamped to [0, 1].

    C2-continuous: value, slope and curvature are zero at both ends. Peak
    slope is 1.875 at tau = 0.5; peak |second derivative| is 10/sqrt(3).
    """
    t = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    out = t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    return float(out) if np.isscalar(tau) else out


def quintic_step_rate(tau) -> np.ndarray | float:
    """First derivative of quintic_step with respect to tau (0 outside [0,1])."""
    t = np.asarray(tau, dtype=float)
    inside = (t >= 0.0) & (t <= 1.0)
    tc = np.clip(t, 0.0, 1.0)
    out = 30.0 * tc * tc * (1.0 - tc) * (1.0 - tc) * inside
    return float(out) if np.isscalar(tau) else out


QUINTIC_MAX_RATE = 1.875          # max of quintic_step_rate
QUINTIC_MAX_CURVATURE = 10.0 / math.sqrt(3.0)  # max |second derivative|
