"""Tracking-quality evaluation: center drift, Re-ID confidence, template
update decisions and the occlusion lifecycle."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

from .core import BoundingBox, Point, box_intersection_area, interval_overlap
from .errors import ConfigError, DomainError, LifecycleError


@dataclass(frozen=True)
class QualityConfig:
    r_side: float = 32.0
    t1: float = 0.4
    t2: float = 0.3
    m_window: int = 3
    t_o: float = 0.6
    n_occl: int = 4

    def __post_init__(self) -> None:
        if not self.r_side > 0:
            raise ConfigError(f"r_side must be positive, got {self.r_side}")
        for name in ("t1", "t2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.m_window < 1:
            raise ConfigError(f"m_window must be >= 1, got {self.m_window}")
        if not 0.0 < self.t_o <= 1.0:
            raise ConfigError(f"t_o must lie in (0, 1], got {self.t_o}")
        if self.n_occl < 0:
            raise ConfigError(f"n_occl must be >= 0, got {self.n_occl}")


class QualityHistory:
    """Sliding window of the last ``m_window`` (drift overlap, confidence) pairs."""

    def __init__(self, m_window: int) -> None:
        if m_window < 1:
            raise ConfigError("m_window must be >= 1")
        self._entries: deque[tuple[float, float]] = deque(maxlen=m_window)

    def append(self, drift_overlap: float, confidence: float) -> None:
        self._entries.append((drift_overlap, confidence))

    def clear(self) -> None:
        self._entries.clear()

    def means(self) -> tuple[float, float]:
        n = len(self._entries)
        if n == 0:
            raise ValueError("quality history is empty")
        return (
            sum(e[0] for e in self._entries) / n,
            sum(e[1] for e in self._entries) / n,
        )

    @property
    def maxlen(self) -> int:
        return self._entries.maxlen

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @classmethod
    def of(cls, entries: Iterable[tuple[float, float]], m_window: int) -> "QualityHistory":
        hist = cls(m_window)
        for a, b in entries:
            hist.append(a, b)
        return hist


class OcclusionStatus(enum.Enum):
    VISIBLE = "visible"
    OCCLUDED = "occluded"
    DELETED = "deleted"


@dataclass(frozen=True)
class OcclusionState:
    consecutive_occluded: int = 0
    status: OcclusionStatus = OcclusionStatus.VISIBLE


def iou_r(prev_center: Point, curr_center: Point, r_side: float) -> float:
    """Overlap ratio of two ``r_side`` squares centered on consecutive box centers.

    Insensitive to box size; it only reacts to how far the center moved.
    """
    if not r_side > 0:
        raise ConfigError(f"r_side must be positive, got {r_side}")
    half = 0.5 * r_side
    (px, py), (qx, qy) = prev_center, curr_center
    s = interval_overlap(px - half, px + half, qx - half, qx + half) * interval_overlap(
        py - half, py + half, qy - half, qy + half
    )
    return min(1.0, s / (2.0 * r_side * r_side - s))


def reid_confidence(c_t: float, drift_overlap: float) -> float:
    if not (0.0 <= c_t <= 1.0 and 0.0 <= drift_overlap <= 1.0):
        raise DomainError(f"confidence inputs must lie in [0, 1], got ({c_t}, {drift_overlap})")
    return c_t * drift_overlap


def should_update_template(history: QualityHistory, cfg: QualityConfig) -> bool:
    """True when both windowed means fall below their thresholds.

    A window shorter than ``m_window`` is averaged over what it holds.
    """
    mean_drift, mean_conf = history.means()
    return mean_drift < cfg.t1 and mean_conf < cfg.t2


def occlusion_coefficient(subject: BoundingBox, other: BoundingBox) -> float:
    """Fraction of ``subject``'s area covered by ``other``. Not symmetric."""
    return min(1.0, box_intersection_area(subject, other) / subject.area)


def resolve_occlusions(
    tracks: Sequence[tuple[Hashable, BoundingBox, float]], cfg: QualityConfig
) -> set:
    """Return the ids of tracks counted as occluded this frame.

    A track is occluded when another box covers more than ``t_o`` of it. When
    two boxes cover each other beyond ``t_o`` only the lower-confidence one is
    marked; equal confidences mark the larger id.
    """
    occluded = set()
    n = len(tracks)
    for i in range(n):
        id_i, box_i, c_i = tracks[i]
        for j in range(n):
            if i == j:
                continue
            id_j, box_j, c_j = tracks[j]
            if occlusion_coefficient(box_i, box_j) <= cfg.t_o:
                continue
            if occlusion_coefficient(box_j, box_i) > cfg.t_o:
                if c_i < c_j or (c_i == c_j and id_i > id_j):
                    occluded.add(id_i)
            else:
                occluded.add(id_i)
    return occluded


def step_occlusion(state: OcclusionState, occluded_now: bool, cfg: QualityConfig) -> OcclusionState:
    if state.status is OcclusionStatus.DELETED:
        raise LifecycleError("cannot step a deleted track")
    if cfg.n_occl == 0:
        return OcclusionState(0, OcclusionStatus.VISIBLE)
    if not occluded_now:
        return OcclusionState(0, OcclusionStatus.VISIBLE)
    count = state.consecutive_occluded + 1
    if count >= cfg.n_occl:
        return OcclusionState(count, OcclusionStatus.DELETED)
    return OcclusionState(count, OcclusionStatus.OCCLUDED)
