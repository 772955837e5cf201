"""Single-camera Re-ID: one tracker per object, gated by tracking quality."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol, Sequence

from .core import BoundingBox, CameraId, Detection, box_iou
from .quality import (
    OcclusionState,
    OcclusionStatus,
    QualityConfig,
    QualityHistory,
    iou_r,
    reid_confidence,
    resolve_occlusions,
    should_update_template,
    step_occlusion,
)


class TrackerLost(RuntimeError):
    """Raised by a backend that cannot place its target in this frame."""


class UpdateMetric(enum.Enum):
    """Which windowed quantities drive template updates."""

    REID = "reid"          # center-drift overlap and drift-weighted confidence
    TRACKING = "tracking"  # plain IoU of consecutive outputs and raw tracker confidence


@dataclass
class TrackTemplate:
    source_box: BoundingBox
    source_frame: int
    age: int = 0
    # backend-private state (e.g. appearance exemplar); opaque to the pipeline
    payload: dict = field(default_factory=dict)


class TrackerBackend(Protocol):
    def initialize(self, template: TrackTemplate, detection: Detection) -> None: ...

    def propose(self, template: TrackTemplate, frame_input: Any) -> tuple[BoundingBox, float]: ...

    def reinitialize(self, template: TrackTemplate, box: BoundingBox, frame_input: Any) -> None: ...


_serial = itertools.count(1)


@dataclass
class TrackerState:
    gid: int
    camera: CameraId
    template: TrackTemplate
    last_box: BoundingBox
    history: QualityHistory
    occl: OcclusionState = field(default_factory=OcclusionState)
    last_c_r: float = 1.0
    serial: int = field(default_factory=lambda: next(_serial))

    @property
    def deleted(self) -> bool:
        return self.occl.status is OcclusionStatus.DELETED


class EventKind(enum.Enum):
    TRACK_CREATED = "track_created"
    TEMPLATE_UPDATED = "template_updated"
    TRACK_OCCLUDED = "track_occluded"
    TRACK_DELETED = "track_deleted"


@dataclass(frozen=True)
class TrackEvent:
    kind: EventKind
    gid: int


@dataclass(frozen=True)
class TrackOutput:
    gid: int
    box: BoundingBox
    c_r: float


@dataclass
class FrameResult:
    camera: CameraId
    frame: int
    outputs: list[TrackOutput] = field(default_factory=list)
    events: list[TrackEvent] = field(default_factory=list)


def create_track(det: Detection, gid: int, backend: TrackerBackend, cfg: Optional[QualityConfig] = None) -> TrackerState:
    cfg = cfg or QualityConfig()
    template = TrackTemplate(source_box=det.box, source_frame=det.frame)
    backend.initialize(template, det)
    return TrackerState(
        gid=gid,
        camera=det.camera,
        template=template,
        last_box=det.box,
        history=QualityHistory(cfg.m_window),
        last_c_r=det.conf,
    )


def _quality(prev: BoundingBox, box: BoundingBox, c_t: float, cfg: QualityConfig, metric: UpdateMetric):
    """Return (windowed drift term, windowed confidence term, c_r of the output)."""
    drift = iou_r(prev.center, box.center, cfg.r_side)
    c_r = reid_confidence(c_t, drift)
    if metric is UpdateMetric.TRACKING:
        return box_iou(prev, box), c_t, c_r
    return drift, c_r, c_r


def process_frame(
    tracks: Sequence[TrackerState],
    frame_input: Any,
    cfg: QualityConfig,
    backend: TrackerBackend,
    camera: CameraId,
    frame: int,
    metric: UpdateMetric = UpdateMetric.REID,
) -> tuple[FrameResult, list[TrackerState]]:
    """Advance every live tracker of one camera by one frame.

    Returns the frame's outputs and events together with the surviving
    trackers. An unqualified output triggers one template refresh and one
    more tracking pass; the occlusion lifecycle then runs over all outputs.
    """
    result = FrameResult(camera=camera, frame=frame)
    proposals: dict[int, tuple[TrackerState, BoundingBox, float]] = {}
    lost: list[TrackerState] = []

    for track in tracks:
        track.template.age += 1
        try:
            box, c_t = backend.propose(track.template, frame_input)
        except TrackerLost:
            lost.append(track)
            continue
        drift_term, conf_term, c_r = _quality(track.last_box, box, c_t, cfg, metric)
        track.history.append(drift_term, conf_term)
        if should_update_template(track.history, cfg):
            backend.reinitialize(track.template, box, frame_input)
            track.template.age = 0
            track.template.source_box = box
            track.template.source_frame = frame
            track.history.clear()
            result.events.append(TrackEvent(EventKind.TEMPLATE_UPDATED, track.gid))
            try:
                box, c_t = backend.propose(track.template, frame_input)
            except TrackerLost:
                lost.append(track)
                continue
            c_r = reid_confidence(c_t, iou_r(track.last_box.center, box.center, cfg.r_side))
        proposals[track.serial] = (track, box, c_r)

    occluded = resolve_occlusions(
        [(t.gid, box, c_r) for t, box, c_r in proposals.values()], cfg
    )
    lost_serials = {t.serial for t in lost}

    survivors = []
    for track in tracks:
        placed = track.serial in proposals
        occluded_now = (track.serial in lost_serials) or (placed and track.gid in occluded)
        track.occl = step_occlusion(track.occl, occluded_now, cfg)
        if track.deleted:
            result.events.append(TrackEvent(EventKind.TRACK_DELETED, track.gid))
            continue
        if occluded_now and track.occl.status is OcclusionStatus.OCCLUDED:
            result.events.append(TrackEvent(EventKind.TRACK_OCCLUDED, track.gid))
        if placed:
            _, box, c_r = proposals[track.serial]
            track.last_box = box
            track.last_c_r = c_r
            result.outputs.append(TrackOutput(track.gid, box, c_r))
        survivors.append(track)
    return result, survivors
