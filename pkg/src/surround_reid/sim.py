"""Deterministic surround-view scenario simulator.

Stands in for a recorded fisheye dataset and for the learned tracker and
embedding networks. Vehicles drive straight along lanes around a static ego
vehicle carrying a left/front/right camera rig. Every random draw is keyed
on the scenario seed, so a configuration always renders the same dataset.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional

import numpy as np

from .core import BoundingBox, CameraId, Detection, WheelKeypoints, box_iou
from .errors import ConfigError
from .projection import CameraModel
from .quality import occlusion_coefficient
from .sct import TrackerLost, TrackTemplate


def default_rig(calib_noise_sigma: float = 0.0) -> dict[CameraId, CameraModel]:
    half_pi = 0.5 * math.pi
    return {
        CameraId.LEFT: CameraModel((0.0, 0.9), half_pi, calib_noise_sigma=calib_noise_sigma),
        CameraId.FRONT: CameraModel((2.0, 0.0), 0.0, calib_noise_sigma=calib_noise_sigma),
        CameraId.RIGHT: CameraModel((0.0, -0.9), -half_pi, calib_noise_sigma=calib_noise_sigma),
    }


@dataclass(frozen=True)
class OcclusionEpisode:
    vehicle: int
    start: int
    length: int

    def covers(self, frame: int) -> bool:
        return self.start <= frame < self.start + self.length


@dataclass(frozen=True)
class NoiseConfig:
    drift_sigma: float = 0.0        # px; detector box noise and tracker drift step
    edge_noise_gain: float = 0.0    # noise multiplier gain toward image side edges
    age_gain: float = 0.0           # tracker drift step growth per frame of template age
    jitter_ratio: float = 0.0       # per-frame tracker jitter relative to the drift step
    scale_sigma: float = 0.0        # log-normal box size jitter of tracker outputs
    recover_frames: int = 4         # hidden frames a tracker can bridge before locking onto the occluder
    foreign_conf: float = 0.6       # confidence factor while a template describes another vehicle
    kp_jitter: float = 0.0          # m; per-observation keypoint ground jitter
    kp_dropout: float = 0.0         # probability a keypoint is not reported
    wheel_occlusion: float = 0.0    # probability a vehicle's wheels stay hidden from a camera all run
    conf_scale: float = 0.3         # center offset, relative to sqrt(box area), at which confidence falls to 1/e
    size_conf: float = 0.0          # confidence penalty per squared log size mismatch
    occlusions: tuple[OcclusionEpisode, ...] = ()

    def __post_init__(self) -> None:
        for name in ("drift_sigma", "edge_noise_gain", "age_gain", "jitter_ratio", "scale_sigma", "kp_jitter", "size_conf"):
            if getattr(self, name) < 0:
                raise ConfigError(f"noise.{name} must be >= 0")
        for name in ("kp_dropout", "wheel_occlusion"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"noise.{name} must lie in [0, 1]")
        if not 0.0 <= self.foreign_conf <= 1.0:
            raise ConfigError("noise.foreign_conf must lie in [0, 1]")
        if self.recover_frames < 0:
            raise ConfigError("noise.recover_frames must be >= 0")
        if not self.conf_scale > 0:
            raise ConfigError("noise.conf_scale must be positive")


@dataclass(frozen=True)
class LookalikePair:
    a: int
    b: int
    delta: float


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 64
    identity_sigma: float = 0.0
    camera_view_sigma: float = 0.0
    norm: float = 2.0
    lookalike_pairs: tuple[LookalikePair, ...] = ()

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ConfigError("embedding.dim must be >= 2")
        if self.identity_sigma < 0 or self.camera_view_sigma < 0:
            raise ConfigError("embedding sigmas must be >= 0")
        if not self.norm > 0:
            raise ConfigError("embedding.norm must be positive")
        for pair in self.lookalike_pairs:
            if not 0 < pair.delta < 2 * self.norm:
                raise ConfigError(f"lookalike delta {pair.delta} outside (0, {2 * self.norm})")


@dataclass(frozen=True)
class TrafficConfig:
    lanes: tuple[float, ...] = (5.0, -5.0)
    speed_min: float = 0.8
    speed_max: float = 1.8
    spacing_min: float = 9.0
    spacing_jitter: float = 4.0
    max_range: float = 20.0
    vehicle_length: float = 4.5
    vehicle_width: float = 1.8
    vehicle_height: float = 1.5
    wheel_inset: float = 0.9
    min_box_px: float = 8.0
    min_visible_fraction: float = 0.0  # detector needs this share of the unclipped box inside the image


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_vehicles: int = 4
    duration_frames: int = 300
    fps: float = 30.0
    rig: Mapping[CameraId, CameraModel] = field(default_factory=default_rig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)

    def __post_init__(self) -> None:
        if self.duration_frames < 1:
            raise ConfigError("duration_frames must be >= 1")
        if self.n_vehicles < 0:
            raise ConfigError("n_vehicles must be >= 0")
        if not self.fps > 0:
            raise ConfigError("fps must be positive")
        if set(self.rig) != set(CameraId):
            raise ConfigError("rig must define exactly the left, front and right cameras")
        for ep in self.noise.occlusions:
            if not 1 <= ep.vehicle <= self.n_vehicles:
                raise ConfigError(f"occlusion episode names unknown vehicle {ep.vehicle}")
            if ep.length < 1 or ep.start < 0:
                raise ConfigError("occlusion episodes need start >= 0 and length >= 1")
        for pair in self.embedding.lookalike_pairs:
            if not (1 <= pair.a <= self.n_vehicles and 1 <= pair.b <= self.n_vehicles) or pair.a == pair.b:
                raise ConfigError(f"lookalike pair ({pair.a}, {pair.b}) names unknown vehicles")


# ---------------------------------------------------------------------------
# world


@dataclass(frozen=True)
class Vehicle:
    gt_id: int
    lane_y: float
    x0: float
    speed: float  # m/s along +x; sign gives heading
    anchor: np.ndarray

    def position(self, frame: int, fps: float) -> tuple[float, float]:
        return (self.x0 + self.speed * frame / fps, self.lane_y)

    @property
    def heading(self) -> float:
        return 1.0 if self.speed >= 0 else -1.0


@dataclass
class ScenarioWorld:
    cfg: ScenarioConfig
    vehicles: list[Vehicle]
    calib_offsets: dict[CameraId, np.ndarray]
    view_offsets: dict[tuple[CameraId, int], np.ndarray]
    wheels_hidden: frozenset = frozenset()

    def vehicle(self, gt_id: int) -> Vehicle:
        return self.vehicles[gt_id - 1]


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _rotate_towards(anchor: np.ndarray, direction: np.ndarray, distance: float) -> np.ndarray:
    """Point on the anchor's sphere exactly ``distance`` away from it."""
    radius = np.linalg.norm(anchor)
    ortho = direction - anchor * (direction @ anchor) / (radius * radius)
    ortho /= np.linalg.norm(ortho)
    theta = 2.0 * math.asin(distance / (2.0 * radius))
    return math.cos(theta) * anchor + math.sin(theta) * radius * ortho


def _anchors(cfg: ScenarioConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Identity anchors on a sphere of radius ``norm``; look-alike partners are
    placed exactly ``delta`` from their reference anchor."""
    emb = cfg.embedding
    min_sep = 3.0 * (emb.camera_view_sigma + emb.identity_sigma)
    anchors: list[np.ndarray] = []
    for _ in range(cfg.n_vehicles):
        for _attempt in range(1000):
            cand = emb.norm * _random_unit(rng, emb.dim)
            if all(np.linalg.norm(cand - a) > min_sep for a in anchors):
                break
        anchors.append(cand)
    for pair in emb.lookalike_pairs:
        anchors[pair.b - 1] = _rotate_towards(anchors[pair.a - 1], rng.standard_normal(emb.dim), pair.delta)
    return anchors


def generate_world(cfg: ScenarioConfig) -> ScenarioWorld:
    """Place vehicles in lane chains so that they sweep through the camera
    fields of view during the scenario, including side/front handoffs."""
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    tr = cfg.traffic
    lanes = list(tr.lanes)
    lane_members: dict[int, list[int]] = {i: [] for i in range(len(lanes))}
    for gid in range(1, cfg.n_vehicles + 1):
        lane_members[(gid - 1) % len(lanes)].append(gid)

    half_travel_time = 0.5 * cfg.duration_frames / cfg.fps
    placement: dict[int, tuple[float, float, float]] = {}
    for lane_idx, members in lane_members.items():
        if not members:
            continue
        heading = 1.0 if rng.random() < 0.5 else -1.0
        speed = heading * rng.uniform(tr.speed_min, tr.speed_max)
        # the lead vehicle reaches the side/front overlap around mid-run;
        # followers trail it along the lane at the lane's common speed
        x = rng.uniform(3.0, 8.0) - speed * half_travel_time
        for gid in members:
            placement[gid] = (lanes[lane_idx], x, speed)
            x -= heading * (tr.spacing_min + tr.spacing_jitter * rng.random())

    anchors = _anchors(cfg, rng)
    vehicles = [
        Vehicle(gid, placement[gid][0], placement[gid][1], placement[gid][2], anchors[gid - 1])
        for gid in range(1, cfg.n_vehicles + 1)
    ]

    calib_offsets = {
        cam: rng.normal(0.0, model.calib_noise_sigma, size=2) if model.calib_noise_sigma > 0 else np.zeros(2)
        for cam, model in sorted(cfg.rig.items(), key=lambda kv: kv[0].index)
    }
    view_offsets = {}
    sigma = cfg.embedding.camera_view_sigma
    for cam in CameraId.ordered():
        for v in vehicles:
            if sigma > 0:
                view_offsets[(cam, v.gt_id)] = rng.normal(0.0, sigma / math.sqrt(cfg.embedding.dim), cfg.embedding.dim)
            else:
                view_offsets[(cam, v.gt_id)] = np.zeros(cfg.embedding.dim)
    wheels_hidden = frozenset(
        (cam, v.gt_id)
        for cam in CameraId.ordered()
        for v in vehicles
        if cfg.noise.wheel_occlusion > 0 and rng.random() < cfg.noise.wheel_occlusion
    )
    return ScenarioWorld(cfg, vehicles, calib_offsets, view_offsets, wheels_hidden)


# ---------------------------------------------------------------------------
# rendering


@dataclass(frozen=True)
class GtObject:
    gt_id: int
    box: BoundingBox
    occluded_by: Optional[int] = None

    @property
    def hidden(self) -> bool:
        return self.occluded_by is not None


@dataclass
class CameraFrame:
    """Everything one camera produced in one frame."""

    camera: CameraId
    frame: int
    detections: list[Detection]
    gt: list[GtObject]

    def gt_by_id(self) -> dict[int, GtObject]:
        return {g.gt_id: g for g in self.gt}

    def visible_gt(self) -> list[GtObject]:
        return [g for g in self.gt if not g.hidden]


def _footprint(v: Vehicle, pos: tuple[float, float], tr: TrafficConfig) -> list[tuple[float, float]]:
    hl, hw = 0.5 * tr.vehicle_length, 0.5 * tr.vehicle_width
    x, y = pos
    return [(x - hl, y - hw), (x + hl, y - hw), (x + hl, y + hw), (x - hl, y + hw)]


def vehicle_box(v: Vehicle, frame: int, cam: CameraModel, cfg: ScenarioConfig) -> Optional[BoundingBox]:
    """Clipped image box of a vehicle, or None if the camera cannot see it."""
    tr = cfg.traffic
    pos = v.position(frame, cfg.fps)
    dx, dy = pos[0] - cam.position[0], pos[1] - cam.position[1]
    if math.hypot(dx, dy) > tr.max_range:
        return None
    u0, v0 = cam.project_point(pos[0], pos[1], 0.0)
    if not cam.in_image(u0, v0):
        return None
    us, vs = [], []
    for (cx, cy) in _footprint(v, pos, tr):
        for z in (0.0, tr.vehicle_height):
            u, vv = cam.project_point(cx, cy, z)
            us.append(u)
            vs.append(vv)
    x1 = max(0.0, min(us))
    x2 = min(float(cam.image_width), max(us))
    y1 = max(0.0, min(vs))
    y2 = min(float(cam.image_height), max(vs))
    if x2 - x1 < tr.min_box_px or y2 - y1 < tr.min_box_px:
        return None
    full_area = (max(us) - min(us)) * (max(vs) - min(vs))
    if (x2 - x1) * (y2 - y1) < tr.min_visible_fraction * full_area:
        return None
    return BoundingBox.from_corners(x1, y1, x2, y2)


def wheel_ground_points(v: Vehicle, frame: int, cfg: ScenarioConfig) -> dict[str, tuple[float, float]]:
    """Ground contact of the front and rear wheel on the side facing the ego."""
    tr = cfg.traffic
    x, y = v.position(frame, cfg.fps)
    axle = 0.5 * tr.vehicle_length - tr.wheel_inset
    side = y - math.copysign(0.5 * tr.vehicle_width, y)
    return {"front": (x + v.heading * axle, side), "rear": (x - v.heading * axle, side)}


def visible_boxes(world: ScenarioWorld, frame: int, camera: CameraId) -> dict[int, BoundingBox]:
    cam = world.cfg.rig[camera]
    out = {}
    for v in world.vehicles:
        box = vehicle_box(v, frame, cam, world.cfg)
        if box is not None:
            out[v.gt_id] = box
    return out


def _pick_occluder(gid: int, boxes: Mapping[int, BoundingBox], hidden: set) -> Optional[int]:
    subject = boxes[gid]
    best, best_key = None, None
    for other, box in boxes.items():
        if other == gid or other in hidden:
            continue
        key = (occlusion_coefficient(subject, box), -math.hypot(box.cx - subject.cx, box.cy - subject.cy), -other)
        if best_key is None or key > best_key:
            best, best_key = other, key
    return best


def _embedding(world: ScenarioWorld, v: Vehicle, camera: CameraId, rng: np.random.Generator) -> np.ndarray:
    emb_cfg = world.cfg.embedding
    vec = v.anchor + world.view_offsets[(camera, v.gt_id)]
    if emb_cfg.identity_sigma > 0:
        vec = vec + rng.normal(0.0, emb_cfg.identity_sigma / math.sqrt(emb_cfg.dim), emb_cfg.dim)
    return emb_cfg.norm * vec / np.linalg.norm(vec)


def _keypoints(
    world: ScenarioWorld, v: Vehicle, frame: int, camera: CameraId, rng: np.random.Generator
) -> Optional[WheelKeypoints]:
    cfg = world.cfg
    if (camera, v.gt_id) in world.wheels_hidden:
        return None
    cam = cfg.rig[camera]
    offset = world.calib_offsets[camera]
    out = {}
    for name, (gx, gy) in wheel_ground_points(v, frame, cfg).items():
        jitter = rng.normal(0.0, cfg.noise.kp_jitter, 2) if cfg.noise.kp_jitter > 0 else (0.0, 0.0)
        drop = cfg.noise.kp_dropout > 0 and rng.random() < cfg.noise.kp_dropout
        u, vv = cam.project_point(gx + offset[0] + jitter[0], gy + offset[1] + jitter[1], 0.0)
        _, el = cam.pixel_to_angles(u, vv)
        if drop or not cam.in_image(u, vv) or el <= 0.0:
            continue
        out[name] = (u, vv)
    return WheelKeypoints(**out) if out else None


def render_frame(world: ScenarioWorld, frame: int) -> dict[CameraId, CameraFrame]:
    """Ground truth and synthetic detections of every camera for one frame."""
    cfg = world.cfg
    if not 0 <= frame < cfg.duration_frames:
        raise ValueError(f"frame {frame} outside [0, {cfg.duration_frames})")
    noise = cfg.noise
    hidden_now = {ep.vehicle for ep in noise.occlusions if ep.covers(frame)}
    out = {}
    for camera in CameraId.ordered():
        cam = cfg.rig[camera]
        rng = np.random.default_rng([cfg.seed, frame, camera.index, 0xD37])
        boxes = visible_boxes(world, frame, camera)
        gt, dets = [], []
        for gid in sorted(boxes):
            box = boxes[gid]
            occluder = _pick_occluder(gid, boxes, hidden_now) if gid in hidden_now else None
            if gid in hidden_now and occluder is not None:
                gt.append(GtObject(gid, box, occluder))
                continue
            gt.append(GtObject(gid, box))
            v = world.vehicle(gid)
            sigma = noise.drift_sigma * (1.0 + noise.edge_noise_gain * cam.edge_proximity(box.cx))
            if sigma > 0:
                dx, dy, dw, dh = rng.normal(0.0, sigma, 4)
                det_box = BoundingBox(box.cx + dx, box.cy + dy, max(4.0, box.w + dw), max(4.0, box.h + dh))
                scale = 0.2 * math.sqrt(box.area)
                conf = math.exp(-((dx * dx + dy * dy) / (scale * scale)))
            else:
                det_box, conf = box, 1.0
            dets.append(
                Detection(
                    camera=camera,
                    frame=frame,
                    box=det_box,
                    conf=conf,
                    keypoints=_keypoints(world, v, frame, camera, rng),
                    embedding=_embedding(world, v, camera, rng),
                    gt_id=gid,
                )
            )
        out[camera] = CameraFrame(camera, frame, dets, gt)
    return out


def render_sequence(world: ScenarioWorld) -> Iterator[dict[CameraId, CameraFrame]]:
    for frame in range(world.cfg.duration_frames):
        yield render_frame(world, frame)


# ---------------------------------------------------------------------------
# oracle tracker


class OracleTracker:
    """Tracker backend driven by ground truth plus a synthetic drift process.

    The output center is the target's true center plus an accumulated random
    walk and per-frame jitter. The walk's step grows with template age and
    toward the image edges; refreshing the template zeroes it. While its
    target is hidden the tracker reports itself lost for up to
    ``recover_frames`` frames; after that its template locks onto the
    occluder, which it then follows with a weakened response.
    """

    def __init__(self, rig: Mapping[CameraId, CameraModel], noise: NoiseConfig, seed: int) -> None:
        self.rig = rig
        self.noise = noise
        self.seed = seed

    def _rng(self, template: TrackTemplate, frame: int, camera: CameraId) -> random.Random:
        target, born = template.payload["key"]
        return random.Random(f"{self.seed}:{camera.index}:{target}:{born}:{frame}:{template.payload['pass']}")

    def initialize(self, template: TrackTemplate, detection: Detection) -> None:
        if detection.gt_id is None:
            raise ValueError("the oracle tracker needs detections with ground-truth ids")
        template.payload.update(
            target=detection.gt_id,
            key=(detection.gt_id, detection.frame),
            drift=(0.0, 0.0),
            hidden=0,
            foreign=False,
            pass_frame=-1,
        )
        template.payload["pass"] = 0

    def propose(self, template: TrackTemplate, frame_input: CameraFrame) -> tuple[BoundingBox, float]:
        p = template.payload
        frame = frame_input.frame
        p["pass"] = p["pass"] + 1 if p["pass_frame"] == frame else 0
        p["pass_frame"] = frame
        gts = frame_input.gt_by_id()
        target = gts.get(p["target"])
        if target is None:
            raise TrackerLost(p["target"])
        if target.hidden:
            if p["pass"] == 0:
                p["hidden"] += 1
            occ = gts.get(target.occluded_by)
            if p["hidden"] <= self.noise.recover_frames or occ is None:
                raise TrackerLost(p["target"])
            # the template now describes the occluder
            p.update(target=occ.gt_id, hidden=0, foreign=True)
            target = occ
        else:
            p["hidden"] = 0

        cam = self.rig[frame_input.camera]
        rng = self._rng(template, frame, frame_input.camera)
        noise = self.noise
        edge = cam.edge_proximity(target.box.cx)
        step = noise.drift_sigma * (1.0 + noise.age_gain * template.age) * (1.0 + noise.edge_noise_gain * edge)
        dx, dy = p["drift"]
        jx = jy = 0.0
        sw = sh = 1.0
        if step > 0:
            dx += rng.gauss(0.0, step)
            dy += rng.gauss(0.0, step)
            if noise.jitter_ratio > 0:
                jx = rng.gauss(0.0, noise.jitter_ratio * step)
                jy = rng.gauss(0.0, noise.jitter_ratio * step)
        if noise.scale_sigma > 0:
            s = noise.scale_sigma * (1.0 + noise.edge_noise_gain * edge)
            sw = math.exp(rng.gauss(0.0, s))
            sh = math.exp(rng.gauss(0.0, s))
        p["drift"] = (dx, dy)
        box = BoundingBox(target.box.cx + dx + jx, target.box.cy + dy + jy, target.box.w * sw, target.box.h * sh)
        conf = self._confidence(dx + jx, dy + jy, target.box, sw, sh)
        if p["foreign"]:
            conf *= noise.foreign_conf
        return self._finish(box, conf, cam, p)

    def _confidence(self, ox: float, oy: float, ref: BoundingBox, sw: float, sh: float) -> float:
        scale = self.noise.conf_scale * math.sqrt(ref.area)
        size_term = self.noise.size_conf * (math.log(sw) ** 2 + math.log(sh) ** 2)
        return math.exp(-(ox * ox + oy * oy) / (scale * scale) - size_term)

    @staticmethod
    def _finish(box: BoundingBox, conf: float, cam: CameraModel, p: dict) -> tuple[BoundingBox, float]:
        if not cam.in_image(box.cx, box.cy):
            raise TrackerLost(p["target"])
        x1, y1, x2, y2 = box.corners()
        x1, y1 = max(0.0, x1), max(0.0, y1)
        x2, y2 = min(float(cam.image_width), x2), min(float(cam.image_height), y2)
        if x2 - x1 < 2.0 or y2 - y1 < 2.0:
            raise TrackerLost(p["target"])
        return BoundingBox.from_corners(x1, y1, x2, y2), min(1.0, max(0.0, conf))

    def reinitialize(self, template: TrackTemplate, box: BoundingBox, frame_input: CameraFrame) -> None:
        """Re-anchor on whichever visible vehicle the current output overlaps most."""
        p = template.payload
        best, best_iou = None, 0.0
        for g in frame_input.visible_gt():
            iou = box_iou(box, g.box)
            if iou > best_iou:
                best, best_iou = g.gt_id, iou
        if best is not None:
            p["target"] = best
        p.update(drift=(0.0, 0.0), hidden=0, foreign=False)
