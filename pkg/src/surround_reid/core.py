"""Shared domain types and axis-aligned box arithmetic.

Boxes are stored center-format ``(cx, cy, w, h)`` in continuous pixel
coordinates. Corner conversion happens only inside the overlap helpers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NewType, Optional

import numpy as np

GlobalId = NewType("GlobalId", int)
Point = tuple[float, float]


class CameraId(enum.Enum):
    """Surround-view cameras, declared in serial processing order."""

    LEFT = "left"
    FRONT = "front"
    RIGHT = "right"

    @classmethod
    def ordered(cls) -> tuple["CameraId", ...]:
        return (cls.LEFT, cls.FRONT, cls.RIGHT)

    @property
    def index(self) -> int:
        return CAMERA_ORDER.index(self)


CAMERA_ORDER = (CameraId.LEFT, CameraId.FRONT, CameraId.RIGHT)


@dataclass(frozen=True, slots=True)
class BoundingBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box dimensions must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> Point:
        return (self.cx, self.cy)

    def corners(self) -> tuple[float, float, float, float]:
        """Return ``(x1, y1, x2, y2)``."""
        hw, hh = 0.5 * self.w, 0.5 * self.h
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1)

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.cx + dx, self.cy + dy, self.w, self.h)

    def as_list(self) -> list[float]:
        return [self.cx, self.cy, self.w, self.h]


@dataclass(frozen=True, slots=True)
class WheelKeypoints:
    """Wheel grounding points. Pixel coordinates in a detection, ground
    meters once projected."""

    front: Optional[Point] = None
    rear: Optional[Point] = None

    def __post_init__(self) -> None:
        if self.front is None and self.rear is None:
            raise ValueError("WheelKeypoints needs at least one of front/rear")

    def categories(self) -> dict[str, Point]:
        out = {}
        if self.front is not None:
            out["front"] = self.front
        if self.rear is not None:
            out["rear"] = self.rear
        return out


@dataclass(frozen=True, slots=True, eq=False)
class Detection:
    camera: CameraId
    frame: int
    box: BoundingBox
    conf: float
    keypoints: Optional[WheelKeypoints] = None
    embedding: Optional[np.ndarray] = None
    gt_id: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.conf <= 1.0:
            raise ValueError(f"detection confidence {self.conf} outside [0, 1]")
        if self.frame < 0:
            raise ValueError("frame index must be non-negative")
        if self.embedding is not None and not np.all(np.isfinite(self.embedding)):
            raise ValueError("embedding contains non-finite values")


def interval_overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def box_intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    """Overlap area of two axis-aligned boxes, in square pixels."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    return interval_overlap(ax1, ax2, bx1, bx2) * interval_overlap(ay1, ay2, by1, by2)


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = box_intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    # corner rounding can push identical boxes a hair above 1
    return min(1.0, inter / (a.area + b.area - inter))


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float array of ``cx, cy, w, h``."""
    if not boxes:
        return np.zeros((0, 4))
    return np.array([(b.cx, b.cy, b.w, b.h) for b in boxes], dtype=float)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two ``(n, 4)`` / ``(m, 4)`` center-format arrays."""
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    a1 = a[:, None, :2] - 0.5 * a[:, None, 2:]
    a2 = a[:, None, :2] + 0.5 * a[:, None, 2:]
    b1 = b[None, :, :2] - 0.5 * b[None, :, 2:]
    b2 = b[None, :, :2] + 0.5 * b[None, :, 2:]
    wh = np.clip(np.minimum(a2, b2) - np.maximum(a1, b1), 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a[:, 2] * a[:, 3])[:, None]
    area_b = (b[:, 2] * b[:, 3])[None, :]
    return np.minimum(inter / (area_a + area_b - inter), 1.0)
