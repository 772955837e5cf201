"""Frame-tick orchestration of the single-camera trackers and the
cross-camera association pass."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from scipy.optimize import linear_sum_assignment

from .core import CAMERA_ORDER, CameraId, Detection, boxes_to_array, iou_matrix
from .mct import (
    AssociationEvent,
    EmbeddingProvider,
    Gallery,
    MctConfig,
    NewTarget,
    region_of,
    run_association_pass,
    update_gallery,
)
from .projection import CameraModel, project_keypoints
from .quality import QualityConfig
from .sct import (
    EventKind,
    FrameResult,
    TrackerBackend,
    TrackerState,
    TrackEvent,
    TrackOutput,
    UpdateMetric,
    create_track,
    process_frame,
)
from .sim import CameraFrame


@dataclass(frozen=True)
class PipelineConfig:
    quality: QualityConfig = field(default_factory=QualityConfig)
    mct: MctConfig = field(default_factory=MctConfig)
    update_metric: UpdateMetric = UpdateMetric.REID
    new_track_iou: float = 0.3


@dataclass
class TickResult:
    frame: int
    results: dict[CameraId, FrameResult]
    associations: list[AssociationEvent]


def match_outputs(outputs, detections, iou_min: float) -> tuple[dict[int, int], list[int]]:
    """Optimal output/detection pairing; returns (output idx -> det idx, unmatched det idxs)."""
    if not detections:
        return {}, []
    if not outputs:
        return {}, list(range(len(detections)))
    ious = iou_matrix(boxes_to_array([o.box for o in outputs]), boxes_to_array([d.box for d in detections]))
    rows, cols = linear_sum_assignment(ious, maximize=True)
    pairs = {int(r): int(c) for r, c in zip(rows, cols) if ious[r, c] >= iou_min}
    taken = set(pairs.values())
    return pairs, [j for j in range(len(detections)) if j not in taken]


class SurroundPipeline:
    """Runs the three camera pipelines serially and associates new targets."""

    def __init__(
        self,
        rig: Mapping[CameraId, CameraModel],
        cfg: PipelineConfig,
        backend: TrackerBackend,
        embedder: EmbeddingProvider,
    ) -> None:
        self.rig = rig
        self.cfg = cfg
        self.backend = backend
        self.embedder = embedder
        self.tracks: dict[CameraId, list[TrackerState]] = {cam: [] for cam in CAMERA_ORDER}
        self.gallery = Gallery(cfg.mct.k_embeddings)
        self._ids = itertools.count(1)

    def allocate_id(self) -> int:
        return next(self._ids)

    def live_ids(self) -> dict[CameraId, set]:
        return {cam: {t.gid for t in tracks} for cam, tracks in self.tracks.items()}

    def _ground_keypoints(self, det: Detection):
        if det.keypoints is None:
            return None
        return project_keypoints(det.keypoints, self.rig[det.camera])

    def step(self, frames: Mapping[CameraId, CameraFrame]) -> TickResult:
        frame = next(iter(frames.values())).frame
        results: dict[CameraId, FrameResult] = {}
        bundle: dict[CameraId, list[NewTarget]] = {}
        for cam in CAMERA_ORDER:
            cf = frames.get(cam) or CameraFrame(cam, frame, [], [])
            result, survivors = process_frame(
                self.tracks[cam], cf, self.cfg.quality, self.backend, cam, frame, self.cfg.update_metric
            )
            self.tracks[cam] = survivors
            results[cam] = result

            pairs, unmatched = match_outputs(result.outputs, cf.detections, self.cfg.new_track_iou)
            for out_idx, det_idx in sorted(pairs.items()):
                det = cf.detections[det_idx]
                update_gallery(
                    self.gallery,
                    result.outputs[out_idx].gid,
                    cam,
                    self.embedder.embed(det, cam, frame),
                    self._ground_keypoints(det),
                    frame,
                )
            targets = []
            for order, det_idx in enumerate(sorted(unmatched, key=lambda j: (cf.detections[j].box.cx, j))):
                det = cf.detections[det_idx]
                targets.append(
                    NewTarget(
                        detection=det,
                        embedding=self.embedder.embed(det, cam, frame),
                        ground_keypoints=self._ground_keypoints(det),
                        region=region_of(det, self.rig[cam], self.cfg.mct.edge_fraction),
                        order=order,
                    )
                )
            bundle[cam] = targets

        live = self.live_ids()
        events = run_association_pass(bundle, self.gallery, self.rig, self.cfg.mct, self.allocate_id, live, frame)
        for ev in events:
            target = next(t for t in bundle[ev.camera] if t.order == ev.target_order)
            track = create_track(target.detection, ev.assigned_id, self.backend, self.cfg.quality)
            self.tracks[ev.camera].append(track)
            res = results[ev.camera]
            res.events.append(TrackEvent(EventKind.TRACK_CREATED, ev.assigned_id))
            res.outputs.append(TrackOutput(ev.assigned_id, target.detection.box, target.detection.conf))

        still_live = set().union(*self.live_ids().values())
        self.gallery.expire(frame, self.cfg.mct.gallery_ttl, still_live)
        return TickResult(frame, results, events)

    def run(self, sequence: Iterable[Mapping[CameraId, CameraFrame]]) -> list[TickResult]:
        return [self.step(frames) for frames in sequence]
