"""Cross-camera identity association.

New targets are scored against a per-identity gallery with a feature score
and, where wheel keypoints allow, a ground-plane spatial score. Which
cameras a new target may inherit from depends on where it appears.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np

from .core import CameraId, Detection, WheelKeypoints
from .errors import ConfigError, DomainError, LifecycleError, MissingKeypointCategory, NoCandidates
from .projection import CameraModel, UncertaintyDisk, disks_overlap, keypoint_distance, uncertainty_radius

EPS = 1e-6


class EmbeddingProvider(Protocol):
    def embed(self, detection: Detection, camera: CameraId, frame: int) -> np.ndarray: ...


class DetectionEmbeddings:
    """Provider that returns the embedding already attached to a detection."""

    def __init__(self, dim: Optional[int] = None) -> None:
        self.dim = dim

    def embed(self, detection: Detection, camera: CameraId, frame: int) -> np.ndarray:
        if detection.embedding is None:
            raise ValueError(f"detection in {camera.value} frame {frame} carries no embedding")
        emb = np.asarray(detection.embedding, dtype=float)
        if self.dim is not None and emb.shape != (self.dim,):
            raise DomainError(f"embedding dimension {emb.shape} != configured ({self.dim},)")
        return emb


@dataclass(frozen=True)
class FusionWeights:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("fusion weights must be non-negative")
        if not self.alpha + self.beta > 0:
            raise ConfigError("alpha + beta must be positive")


class ImageRegion(enum.Enum):
    LEFT_EDGE = "left_edge"
    INTERIOR = "interior"
    RIGHT_EDGE = "right_edge"


@dataclass(frozen=True)
class MctConfig:
    k_embeddings: int = 5
    tau_s: float = 0.35
    edge_fraction: float = 0.25
    weights: FusionWeights = field(default_factory=FusionWeights)
    eps: float = EPS
    r0: float = 0.2
    k_slope: float = 0.05
    use_gate: bool = True
    gallery_ttl: int = 90

    def __post_init__(self) -> None:
        if self.k_embeddings < 1:
            raise ConfigError("k_embeddings must be >= 1")
        if not 0.0 < self.edge_fraction < 0.5:
            raise ConfigError("edge_fraction must lie in (0, 0.5)")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.gallery_ttl < 0:
            raise ConfigError("gallery_ttl must be >= 0")


def feature_distance(query: np.ndarray, gallery_entries: Sequence[np.ndarray]) -> float:
    """Smallest Euclidean distance from ``query`` to any stored embedding."""
    if len(gallery_entries) == 0:
        raise NoCandidates("no stored embeddings")
    stacked = np.asarray(gallery_entries, dtype=float)
    return float(np.sqrt(((stacked - query) ** 2).sum(axis=1)).min())


def _log_score(d: float, eps: float) -> float:
    if d < 0:
        raise DomainError(f"distance must be non-negative, got {d}")
    return math.log(1.0 / max(d, eps) + 1.0)


def score_s1(d_f: float, eps: float = EPS) -> float:
    return _log_score(d_f, eps)


def score_s2(d_k: float, eps: float = EPS) -> float:
    return _log_score(d_k, eps)


def fuse(s1: float, s2: float, w: FusionWeights = FusionWeights()) -> float:
    if w.alpha + w.beta <= 0:
        raise ConfigError("alpha + beta must be positive")
    return (w.alpha * s1 + w.beta * s2) / (w.alpha + w.beta)


def region_of(det: Detection, cam: CameraModel, edge_fraction: float = 0.25) -> ImageRegion:
    if not 0.0 < edge_fraction < 0.5:
        raise ConfigError("edge_fraction must lie in (0, 0.5)")
    width = cam.image_width
    if det.box.cx < edge_fraction * width:
        return ImageRegion.LEFT_EDGE
    if det.box.cx > (1.0 - edge_fraction) * width:
        return ImageRegion.RIGHT_EDGE
    return ImageRegion.INTERIOR


_CANDIDATES = {
    (CameraId.LEFT, ImageRegion.LEFT_EDGE): (CameraId.LEFT,),
    (CameraId.LEFT, ImageRegion.INTERIOR): (CameraId.FRONT,),
    (CameraId.LEFT, ImageRegion.RIGHT_EDGE): (CameraId.FRONT,),
    (CameraId.RIGHT, ImageRegion.RIGHT_EDGE): (CameraId.RIGHT,),
    (CameraId.RIGHT, ImageRegion.INTERIOR): (CameraId.FRONT,),
    (CameraId.RIGHT, ImageRegion.LEFT_EDGE): (CameraId.FRONT,),
    (CameraId.FRONT, ImageRegion.LEFT_EDGE): (CameraId.LEFT,),
    (CameraId.FRONT, ImageRegion.RIGHT_EDGE): (CameraId.RIGHT,),
    (CameraId.FRONT, ImageRegion.INTERIOR): (),
}


def candidate_cameras(new_target_cam: CameraId, region: ImageRegion) -> list[CameraId]:
    """Cameras whose gallery entries a new target may inherit an identity from.

    Outer edges of the side cameras only look back into their own camera;
    the rest of a side camera looks at the front camera; the front camera's
    side edges look at the matching side camera and its interior at nothing.
    """
    return list(_CANDIDATES[(new_target_cam, region)])


# ---------------------------------------------------------------------------
# gallery


@dataclass
class GalleryEntry:
    embeddings: deque
    keypoints: Optional[WheelKeypoints] = None
    keypoint_frame: Optional[int] = None
    last_frame: int = 0


class Gallery:
    """Recent embeddings and last projected keypoints per (identity, camera)."""

    def __init__(self, k: int = 5) -> None:
        if k < 1:
            raise ConfigError("k must be >= 1")
        self.k = k
        self._entries: dict[tuple[int, CameraId], GalleryEntry] = {}
        self._deleted: set[int] = set()

    def entry(self, gid: int, camera: CameraId) -> Optional[GalleryEntry]:
        return self._entries.get((gid, camera))

    def entries_for(self, cameras: Iterable[CameraId]) -> list[tuple[int, CameraId, GalleryEntry]]:
        wanted = set(cameras)
        out = [(gid, cam, e) for (gid, cam), e in self._entries.items() if cam in wanted]
        out.sort(key=lambda t: (t[0], t[1].index))
        return out

    def ids(self) -> set[int]:
        return {gid for gid, _ in self._entries}

    def is_deleted(self, gid: int) -> bool:
        return gid in self._deleted

    def delete_id(self, gid: int) -> None:
        for key in [key for key in self._entries if key[0] == gid]:
            del self._entries[key]
        self._deleted.add(gid)

    def expire(self, frame: int, ttl: int, live_ids: set) -> list[int]:
        """Drop stale entries of identities no camera is tracking; return the
        identities that disappeared from the gallery as a result."""
        before = self.ids()
        for key, e in list(self._entries.items()):
            if key[0] not in live_ids and frame - e.last_frame > ttl:
                del self._entries[key]
        gone = sorted(before - self.ids() - live_ids)
        self._deleted.update(gone)
        return gone

    def __len__(self) -> int:
        return len(self._entries)


def update_gallery(
    gallery: Gallery,
    gid: int,
    camera: CameraId,
    emb: Optional[np.ndarray],
    kpts: Optional[WheelKeypoints],
    frame: int,
) -> Gallery:
    if gallery.is_deleted(gid):
        raise LifecycleError(f"identity {gid} has been deleted")
    key = (gid, camera)
    entry = gallery._entries.get(key)
    if entry is None:
        entry = GalleryEntry(embeddings=deque(maxlen=gallery.k), last_frame=frame)
        gallery._entries[key] = entry
    if emb is not None:
        entry.embeddings.append(np.asarray(emb, dtype=float))
    if kpts is not None:
        entry.keypoints = kpts
        entry.keypoint_frame = frame
    entry.last_frame = frame
    return gallery


# ---------------------------------------------------------------------------
# association


@dataclass
class NewTarget:
    detection: Detection
    embedding: np.ndarray
    ground_keypoints: Optional[WheelKeypoints] = None
    region: ImageRegion = ImageRegion.INTERIOR
    order: int = 0

    @property
    def camera(self) -> CameraId:
        return self.detection.camera


@dataclass(frozen=True)
class CandidateScore:
    gid: int
    camera: CameraId
    s1: float
    s2: Optional[float]
    s: float
    gated_out: bool = False


@dataclass(frozen=True)
class Inherit:
    gid: int
    s: float


@dataclass(frozen=True)
class NewId:
    pass


@dataclass
class AssociationResult:
    decision: object
    candidates: list[CandidateScore]


def spatial_gate(
    target_kp: Optional[WheelKeypoints],
    target_cam: CameraModel,
    entry_kp: Optional[WheelKeypoints],
    entry_cam: CameraModel,
    r0: float,
    k_slope: float,
) -> Optional[bool]:
    """Per-category disk overlap test. None when no category is shared."""
    if target_kp is None or entry_kp is None:
        return None
    a, b = target_kp.categories(), entry_kp.categories()
    shared = [name for name in ("front", "rear") if name in a and name in b]
    if not shared:
        return None
    for name in shared:
        pa, pb = a[name], b[name]
        da = UncertaintyDisk(pa, uncertainty_radius(pa, target_cam, r0, k_slope))
        db = UncertaintyDisk(pb, uncertainty_radius(pb, entry_cam, r0, k_slope))
        if not disks_overlap(da, db):
            return False
    return True


def score_candidate(
    target: NewTarget,
    gid: int,
    camera: CameraId,
    entry: GalleryEntry,
    rig: Mapping[CameraId, CameraModel],
    cfg: MctConfig,
) -> Optional[CandidateScore]:
    """Fused score of one gallery entry, or None when it has no embeddings."""
    if not entry.embeddings:
        return None
    s1 = score_s1(feature_distance(target.embedding, entry.embeddings), cfg.eps)
    gate = None
    if cfg.use_gate:
        gate = spatial_gate(
            target.ground_keypoints, rig[target.camera], entry.keypoints, rig[camera], cfg.r0, cfg.k_slope
        )
        if gate is False:
            return CandidateScore(gid, camera, s1, None, float("-inf"), gated_out=True)
    s2 = None
    if cfg.weights.beta > 0 and target.ground_keypoints is not None and entry.keypoints is not None:
        try:
            s2 = score_s2(keypoint_distance(target.ground_keypoints, entry.keypoints), cfg.eps)
        except MissingKeypointCategory:
            s2 = None
    if s2 is None:
        s = fuse(s1, 0.0, FusionWeights(cfg.weights.alpha or 1.0, 0.0))
    else:
        s = fuse(s1, s2, cfg.weights)
    return CandidateScore(gid, camera, s1, s2, s)


def associate(
    target: NewTarget,
    gallery: Gallery,
    cams: Sequence[CameraId],
    rig: Mapping[CameraId, CameraModel],
    cfg: MctConfig,
    exclude: Optional[set] = None,
) -> AssociationResult:
    """Pick the best-scoring gallery identity for a new target.

    Candidates failing the spatial gate are never inherited. The winner needs
    a fused score of at least ``tau_s``; ties go to the smaller identity.
    """
    exclude = exclude or set()
    scored: list[CandidateScore] = []
    for gid, cam, entry in gallery.entries_for(cams):
        if gid in exclude:
            continue
        cand = score_candidate(target, gid, cam, entry, rig, cfg)
        if cand is not None:
            scored.append(cand)
    best = None
    for cand in scored:
        if cand.gated_out:
            continue
        if best is None or cand.s > best.s or (cand.s == best.s and cand.gid < best.gid):
            best = cand
    if best is not None and best.s >= cfg.tau_s:
        return AssociationResult(Inherit(best.gid, best.s), scored)
    return AssociationResult(NewId(), scored)


def association_phase(target: NewTarget, cams: Sequence[CameraId]) -> int:
    """0 for left/front pairings, 1 for front/right pairings."""
    involved = {target.camera, *cams}
    return 1 if CameraId.RIGHT in involved else 0


@dataclass
class AssociationEvent:
    frame: int
    camera: CameraId
    target_order: int
    region: ImageRegion
    candidate_cameras: list[CameraId]
    candidates: list[CandidateScore]
    decision: object
    assigned_id: int
    gt_id: Optional[int] = None


def run_association_pass(
    frame_bundle: Mapping[CameraId, Sequence[NewTarget]],
    gallery: Gallery,
    rig: Mapping[CameraId, CameraModel],
    cfg: MctConfig,
    allocate_id: Callable[[], int],
    live_ids: Mapping[CameraId, set],
    frame: int,
) -> list[AssociationEvent]:
    """Resolve all new targets of one frame tick, left/front pairings first.

    Every decision writes to the gallery and to ``live_ids`` before the next
    target is scored, so later targets see earlier outcomes.
    """
    queue = []
    for cam in CameraId.ordered():
        for target in frame_bundle.get(cam, ()):
            cams = candidate_cameras(cam, target.region)
            queue.append((association_phase(target, cams), cam.index, target.order, target, cams))
    queue.sort(key=lambda item: item[:3])

    events = []
    for _, _, _, target, cams in queue:
        own_live = live_ids.setdefault(target.camera, set())
        result = associate(target, gallery, cams, rig, cfg, exclude=own_live)
        if isinstance(result.decision, Inherit):
            gid = result.decision.gid
        else:
            gid = allocate_id()
        own_live.add(gid)
        update_gallery(gallery, gid, target.camera, target.embedding, target.ground_keypoints, frame)
        events.append(
            AssociationEvent(
                frame=frame,
                camera=target.camera,
                target_order=target.order,
                region=target.region,
                candidate_cameras=list(cams),
                candidates=result.candidates,
                decision=result.decision,
                assigned_id=gid,
                gt_id=target.detection.gt_id,
            )
        )
    return events
