"""Identity-consistency evaluation.

An identity switch is counted when a ground-truth target is matched to a
hypothesis id that differs from the last id it was matched to. IC is one
minus the switch count over the number of ground-truth target-frames.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import BoundingBox, CameraId, boxes_to_array, iou_matrix

Labelled = tuple[Hashable, BoundingBox]


@dataclass
class EvalFrame:
    frame: int
    gt: list[Labelled] = field(default_factory=list)
    hyp: list[Labelled] = field(default_factory=list)


@dataclass
class EvalSequence:
    """Per-camera lists of frames, each frame holding GT and hypothesis boxes."""

    cameras: dict[CameraId, list[EvalFrame]] = field(default_factory=dict)

    def frames(self, camera: CameraId) -> list[EvalFrame]:
        return self.cameras.setdefault(camera, [])


@dataclass
class IcReport:
    total_idsw: int
    total_id: int
    idsw_per_frame: dict[int, int]
    per_camera: dict[CameraId, "IcReport"] = field(default_factory=dict)

    @property
    def ic(self) -> Optional[float]:
        if self.total_id == 0:
            return None
        return 1.0 - self.total_idsw / self.total_id

    def as_dict(self) -> dict:
        out = {
            "total_idsw": self.total_idsw,
            "total_id": self.total_id,
            "ic": self.ic,
            "idsw_per_frame": {str(k): v for k, v in sorted(self.idsw_per_frame.items())},
        }
        if self.per_camera:
            out["per_camera"] = {cam.value: rep.as_dict() for cam, rep in self.per_camera.items()}
        return out


def match_frame(gt: Sequence[Labelled], hyp: Sequence[Labelled], iou_min: float = 0.5) -> set[tuple]:
    """Maximum-total-IoU one-to-one matching restricted to pairs with IoU >= iou_min."""
    if not 0.0 < iou_min <= 1.0:
        raise ValueError("iou_min must lie in (0, 1]")
    if not gt or not hyp:
        return set()
    ious = iou_matrix(boxes_to_array([b for _, b in gt]), boxes_to_array([b for _, b in hyp]))
    allowed = ious >= iou_min
    if not allowed.any():
        return set()
    # disallowed pairs get zero weight and are dropped after solving
    weights = np.where(allowed, ious, 0.0)
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return {(gt[r][0], hyp[c][0]) for r, c in zip(rows, cols) if allowed[r, c]}


def _count_camera(frames: Iterable[EvalFrame], iou_min: float, state: dict, per_frame: dict) -> tuple[int, int]:
    idsw = total = 0
    for fr in frames:
        total += len(fr.gt)
        switches = 0
        for gt_id, hyp_id in match_frame(fr.gt, fr.hyp, iou_min):
            last = state.get(gt_id)
            if last is not None and last != hyp_id:
                switches += 1
            state[gt_id] = hyp_id
        if switches:
            per_frame[fr.frame] = per_frame.get(fr.frame, 0) + switches
        idsw += switches
    return idsw, total


def count_idsw(seq: EvalSequence, iou_min: float = 0.5, scope: str = "camera") -> IcReport:
    """Count identity switches over a sequence.

    ``scope="camera"`` keeps last-known assignments per (camera, gt id);
    ``scope="global"`` shares them across cameras, walking cameras in
    processing order within each frame.
    """
    if scope not in ("camera", "global"):
        raise ValueError(f"unknown state scope {scope!r}")
    per_camera: dict[CameraId, IcReport] = {}
    cams = [c for c in CameraId.ordered() if c in seq.cameras]

    if scope == "camera":
        for cam in cams:
            per_frame: dict[int, int] = {}
            idsw, total = _count_camera(seq.cameras[cam], iou_min, {}, per_frame)
            per_camera[cam] = IcReport(idsw, total, per_frame)
    else:
        state: dict = {}
        by_frame: dict[int, list[tuple[CameraId, EvalFrame]]] = defaultdict(list)
        for cam in cams:
            for fr in seq.cameras[cam]:
                by_frame[fr.frame].append((cam, fr))
        cam_totals = {cam: [0, 0, {}] for cam in cams}
        for t in sorted(by_frame):
            for cam, fr in sorted(by_frame[t], key=lambda item: item[0].index):
                acc = cam_totals[cam]
                idsw, total = _count_camera([fr], iou_min, state, acc[2])
                acc[0] += idsw
                acc[1] += total
        per_camera = {cam: IcReport(a[0], a[1], a[2]) for cam, a in cam_totals.items()}

    merged: dict[int, int] = defaultdict(int)
    for rep in per_camera.values():
        for t, n in rep.idsw_per_frame.items():
            merged[t] += n
    return IcReport(
        total_idsw=sum(r.total_idsw for r in per_camera.values()),
        total_id=sum(r.total_id for r in per_camera.values()),
        idsw_per_frame=dict(merged),
        per_camera=per_camera,
    )
