"""Multi-camera vehicle re-identification with a deterministic scenario simulator."""

from .core import BoundingBox, CameraId, Detection, WheelKeypoints, box_intersection_area, box_iou
from .metrics import EvalFrame, EvalSequence, IcReport, count_idsw, match_frame
from .mct import FusionWeights, Gallery, ImageRegion, MctConfig, associate, candidate_cameras, fuse, score_s1, score_s2
from .quality import QualityConfig, iou_r, occlusion_coefficient, reid_confidence, should_update_template

__all__ = [
    "BoundingBox",
    "CameraId",
    "Detection",
    "EvalFrame",
    "EvalSequence",
    "FusionWeights",
    "Gallery",
    "IcReport",
    "ImageRegion",
    "MctConfig",
    "QualityConfig",
    "WheelKeypoints",
    "associate",
    "box_intersection_area",
    "box_iou",
    "candidate_cameras",
    "count_idsw",
    "fuse",
    "iou_r",
    "match_frame",
    "occlusion_coefficient",
    "reid_confidence",
    "score_s1",
    "score_s2",
    "should_update_template",
]

__version__ = "0.1.0"
