"""Ground-plane projection of wheel keypoints and the spatial-consistency gate.

The camera model maps pixel columns linearly to azimuth and pixel rows
linearly to elevation below the horizontal; a pixel's ground point is where
that viewing ray meets the plane ``z = 0``. It is closed-form and exactly
invertible, which is all the spatial constraint needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .core import Point, WheelKeypoints
from .errors import ConfigError, MissingKeypointCategory, NoGroundIntersection

GroundPoint = tuple[float, float]


@dataclass(frozen=True)
class CameraModel:
    position: GroundPoint
    yaw: float
    hfov: float = math.radians(150.0)
    image_width: int = 1280
    image_height: int = 720
    height: float = 1.0
    pitch: float = math.radians(15.0)
    vfov: float = math.radians(90.0)
    calib_noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.hfov < math.pi:
            raise ConfigError(f"hfov must lie in (0, pi), got {self.hfov}")
        if not 0.0 < self.vfov < math.pi:
            raise ConfigError(f"vfov must lie in (0, pi), got {self.vfov}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ConfigError("image dimensions must be positive")
        if not self.height > 0:
            raise ConfigError("camera mount height must be positive")
        if self.calib_noise_sigma < 0:
            raise ConfigError("calib_noise_sigma must be >= 0")

    def pixel_to_angles(self, u: float, v: float) -> tuple[float, float]:
        """Return (world azimuth, elevation below horizontal) of a pixel."""
        az = self.yaw + (0.5 * self.image_width - u) / self.image_width * self.hfov
        el = self.pitch + (v - 0.5 * self.image_height) / self.image_height * self.vfov
        return az, el

    def project_point(self, x: float, y: float, z: float = 0.0) -> tuple[float, float]:
        """Forward projection of a world point to (possibly off-image) pixels."""
        dx, dy = x - self.position[0], y - self.position[1]
        rel = math.atan2(dy, dx) - self.yaw
        rel = (rel + math.pi) % (2.0 * math.pi) - math.pi
        el = math.atan2(self.height - z, math.hypot(dx, dy))
        u = 0.5 * self.image_width - rel / self.hfov * self.image_width
        v = 0.5 * self.image_height + (el - self.pitch) / self.vfov * self.image_height
        return u, v

    def in_image(self, u: float, v: float) -> bool:
        return 0.0 <= u <= self.image_width and 0.0 <= v <= self.image_height

    def edge_proximity(self, u: float) -> float:
        """0 at the image's vertical center line, 1 at either side edge."""
        half = 0.5 * self.image_width
        return min(1.0, abs(u - half) / half)


@dataclass(frozen=True)
class UncertaintyDisk:
    center: GroundPoint
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ConfigError(f"disk radius must be positive, got {self.radius}")


def project_to_ground(kp: Point, cam: CameraModel) -> GroundPoint:
    u, v = kp
    if not cam.in_image(u, v):
        raise ValueError(f"keypoint {kp} lies outside the {cam.image_width}x{cam.image_height} image")
    az, el = cam.pixel_to_angles(u, v)
    if el <= 0.0:
        raise NoGroundIntersection(f"pixel row {v} is on or above the horizon")
    dist = cam.height / math.tan(el)
    return (cam.position[0] + dist * math.cos(az), cam.position[1] + dist * math.sin(az))


def project_keypoints(kp: WheelKeypoints, cam: CameraModel) -> Optional[WheelKeypoints]:
    """Project every category that has a ground intersection; None if none do."""
    out = {}
    for name, point in kp.categories().items():
        try:
            out[name] = project_to_ground(point, cam)
        except (NoGroundIntersection, ValueError):
            continue
    if not out:
        return None
    return WheelKeypoints(**out)


def uncertainty_radius(p: GroundPoint, cam: CameraModel, r0: float = 0.2, k: float = 0.05) -> float:
    """Radius of the projection-uncertainty disk; grows linearly with range."""
    if not r0 > 0:
        raise ConfigError("r0 must be positive")
    if k < 0:
        raise ConfigError("k must be non-negative")
    return r0 + k * math.hypot(p[0] - cam.position[0], p[1] - cam.position[1])


def disks_overlap(a: UncertaintyDisk, b: UncertaintyDisk) -> bool:
    dist = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])
    return dist <= a.radius + b.radius


def keypoint_distance(a: WheelKeypoints, b: WheelKeypoints) -> float:
    """Sum of front-pair and rear-pair ground distances, in meters."""
    if a.front is None or b.front is None:
        raise MissingKeypointCategory("front")
    if a.rear is None or b.rear is None:
        raise MissingKeypointCategory("rear")
    d_front = math.hypot(a.front[0] - b.front[0], a.front[1] - b.front[1])
    d_rear = math.hypot(a.rear[0] - b.rear[0], a.rear[1] - b.rear[1])
    return d_front + d_rear
