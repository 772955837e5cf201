"""Run configuration: a JSON document with one block per subsystem.

Every block is optional and falls back to the module defaults. Unknown keys
are rejected, and every error names the offending field path (or the line
and column when the document itself does not parse).

Schema, with defaults::

    {
      "quality":    {"r_side": 32, "t1": 0.4, "t2": 0.3, "m_window": 3,
                     "t_o": 0.6, "n_occl": 4, "update_metric": "reid"},
      "mct":        {"k_embeddings": 5, "tau_s": 0.35, "edge_fraction": 0.25,
                     "alpha": 1.0, "beta": 1.0, "eps": 1e-6, "use_gate": true,
                     "gallery_ttl": 90, "new_track_iou": 0.3},
      "projection": {"r0": 0.2, "k": 0.05,
                     "rig": {"left": {...}, "front": {...}, "right": {...}}},
      "sim":        {"seed": 0, "n_vehicles": 4, "duration_frames": 300,
                     "fps": 30, "noise": {...}, "embedding": {...},
                     "traffic": {...}},
      "eval":       {"iou_min": 0.5, "scope": "camera"},
      "ablate":     {"seeds": 30}
    }

Rig cameras take ``position`` [x, y] in meters, angles in degrees
(``yaw_deg``, ``hfov_deg``, ``vfov_deg``, ``pitch_deg``), ``image_width``,
``image_height``, mount ``height`` and ``calib_noise_sigma``; keys left out
keep the default rig's value for that camera.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .core import CameraId
from .errors import ConfigError
from .mct import FusionWeights, MctConfig
from .pipeline import PipelineConfig
from .projection import CameraModel
from .quality import QualityConfig
from .sct import UpdateMetric
from .sim import (
    EmbeddingConfig,
    LookalikePair,
    NoiseConfig,
    OcclusionEpisode,
    ScenarioConfig,
    TrafficConfig,
    default_rig,
)

SCOPES = ("camera", "global")
_ANGLE_KEYS = {"yaw_deg": "yaw", "hfov_deg": "hfov", "vfov_deg": "vfov", "pitch_deg": "pitch"}


@dataclass(frozen=True)
class RunConfig:
    quality: QualityConfig = field(default_factory=QualityConfig)
    update_metric: UpdateMetric = UpdateMetric.REID
    mct: MctConfig = field(default_factory=MctConfig)
    new_track_iou: float = 0.3
    sim: ScenarioConfig = field(default_factory=ScenarioConfig)
    iou_min: float = 0.5
    scope: str = "camera"
    ablate_seeds: int = 30

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.quality, self.mct, self.update_metric, self.new_track_iou)

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        return self if seed is None else replace(self, sim=replace(self.sim, seed=seed))


# ---------------------------------------------------------------------------
# value checks


def _block(data: Any, path: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    return data


def _reject_unknown(data: Mapping, allowed, path: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _boolean(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false, got {value!r}")
    return value


def _like(default: Any, value: Any, path: str) -> Any:
    """Check ``value`` against the type of a field's default."""
    if isinstance(default, bool):
        return _boolean(value, path)
    if isinstance(default, int):
        return _integer(value, path)
    if isinstance(default, float):
        return _number(value, path)
    raise ConfigError(f"{path}: not configurable")


def _build(cls, data: Mapping, path: str, skip=(), **extra):
    """Instantiate a config dataclass from its scalar fields plus ``extra``.

    Callers pop nested blocks first, so only scalar keys may remain.
    """
    defaults = cls()
    scalars = [f.name for f in dataclasses.fields(cls) if f.name not in skip and f.name not in extra]
    _reject_unknown(data, scalars, path)
    kwargs = {k: _like(getattr(defaults, k), v, f"{path}.{k}") for k, v in data.items() if k in scalars}
    kwargs.update({k: v for k, v in extra.items() if v is not None})
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
    return value


# ---------------------------------------------------------------------------
# blocks


def _quality(data: dict) -> tuple[QualityConfig, UpdateMetric]:
    data = dict(_block(data, "quality"))
    metric = UpdateMetric.REID
    if "update_metric" in data:
        raw = data.pop("update_metric")
        try:
            metric = UpdateMetric(raw)
        except ValueError:
            choices = ", ".join(m.value for m in UpdateMetric)
            raise ConfigError(f"quality.update_metric: expected one of {choices}, got {raw!r}") from None
    return _build(QualityConfig, data, "quality"), metric


def _mct(data: dict, projection: dict) -> tuple[MctConfig, float]:
    data = dict(_block(data, "mct"))
    new_track_iou = 0.3
    if "new_track_iou" in data:
        new_track_iou = _number(data.pop("new_track_iou"), "mct.new_track_iou")
        if not 0.0 < new_track_iou <= 1.0:
            raise ConfigError("mct.new_track_iou: must lie in (0, 1]")
    alpha = _number(data.pop("alpha", 1.0), "mct.alpha")
    beta = _number(data.pop("beta", 1.0), "mct.beta")
    try:
        weights = FusionWeights(alpha, beta)
    except ConfigError as exc:
        raise ConfigError(f"mct.alpha/beta: {exc}") from None
    spatial = {}
    if "r0" in projection:
        spatial["r0"] = _number(projection["r0"], "projection.r0")
    if "k" in projection:
        spatial["k_slope"] = _number(projection["k"], "projection.k")
    for name, value in spatial.items():
        if value < 0:
            raise ConfigError(f"projection.{'k' if name == 'k_slope' else name}: must be >= 0")
    cfg = _build(MctConfig, data, "mct", skip=("r0", "k_slope"), weights=weights)
    return replace(cfg, **spatial), new_track_iou


def _camera(base: CameraModel, data: Any, path: str) -> CameraModel:
    data = _block(data, path)
    allowed = {"position", "image_width", "image_height", "height", "calib_noise_sigma", *_ANGLE_KEYS}
    _reject_unknown(data, allowed, path)
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        sub = f"{path}.{key}"
        if key == "position":
            pos = _list(value, sub)
            if len(pos) != 2:
                raise ConfigError(f"{sub}: expected [x, y]")
            kwargs["position"] = (_number(pos[0], sub), _number(pos[1], sub))
        elif key in _ANGLE_KEYS:
            kwargs[_ANGLE_KEYS[key]] = math.radians(_number(value, sub))
        else:
            kwargs[key] = _like(getattr(base, key), value, sub)
    try:
        return replace(base, **kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _rig(data: Any) -> dict[CameraId, CameraModel]:
    data = _block(data, "projection.rig")
    _reject_unknown(data, [c.value for c in CameraId], "projection.rig")
    rig = default_rig()
    for cam in CameraId.ordered():
        if cam.value in data:
            rig[cam] = _camera(rig[cam], data[cam.value], f"projection.rig.{cam.value}")
    return rig


def _noise(data: Any) -> NoiseConfig:
    data = dict(_block(data, "sim.noise"))
    episodes = []
    for i, raw in enumerate(_list(data.pop("occlusions", []), "sim.noise.occlusions")):
        path = f"sim.noise.occlusions[{i}]"
        raw = _block(raw, path)
        _reject_unknown(raw, ("vehicle", "start", "length"), path)
        try:
            episodes.append(OcclusionEpisode(*(_integer(raw[k], f"{path}.{k}") for k in ("vehicle", "start", "length"))))
        except KeyError as exc:
            raise ConfigError(f"{path}.{exc.args[0]}: missing") from None
    return _build(NoiseConfig, data, "sim.noise", occlusions=tuple(episodes))


def _embedding(data: Any) -> EmbeddingConfig:
    data = dict(_block(data, "sim.embedding"))
    pairs = []
    for i, raw in enumerate(_list(data.pop("lookalike_pairs", []), "sim.embedding.lookalike_pairs")):
        path = f"sim.embedding.lookalike_pairs[{i}]"
        raw = _block(raw, path)
        _reject_unknown(raw, ("a", "b", "delta"), path)
        try:
            pairs.append(LookalikePair(_integer(raw["a"], f"{path}.a"), _integer(raw["b"], f"{path}.b"), _number(raw["delta"], f"{path}.delta")))
        except KeyError as exc:
            raise ConfigError(f"{path}.{exc.args[0]}: missing") from None
    return _build(EmbeddingConfig, data, "sim.embedding", lookalike_pairs=tuple(pairs))


def _traffic(data: Any) -> TrafficConfig:
    data = dict(_block(data, "sim.traffic"))
    lanes = None
    if "lanes" in data:
        lanes = tuple(_number(y, "sim.traffic.lanes") for y in _list(data.pop("lanes"), "sim.traffic.lanes"))
        if not lanes:
            raise ConfigError("sim.traffic.lanes: needs at least one lane")
    cfg = _build(TrafficConfig, data, "sim.traffic", lanes=lanes)
    if cfg.speed_min > cfg.speed_max or cfg.speed_min < 0:
        raise ConfigError("sim.traffic: need 0 <= speed_min <= speed_max")
    if not 0.0 <= cfg.min_visible_fraction <= 1.0:
        raise ConfigError("sim.traffic.min_visible_fraction: must lie in [0, 1]")
    return cfg


def _sim(data: Any, rig: dict[CameraId, CameraModel]) -> ScenarioConfig:
    data = dict(_block(data, "sim"))
    noise = _noise(data.pop("noise", {}))
    embedding = _embedding(data.pop("embedding", {}))
    traffic = _traffic(data.pop("traffic", {}))
    return _build(
        ScenarioConfig, data, "sim", noise=noise, embedding=embedding, traffic=traffic, rig=rig
    )


def _eval(data: Any) -> tuple[float, str]:
    data = _block(data, "eval")
    _reject_unknown(data, ("iou_min", "scope"), "eval")
    iou_min = _number(data.get("iou_min", 0.5), "eval.iou_min")
    if not 0.0 < iou_min <= 1.0:
        raise ConfigError("eval.iou_min: must lie in (0, 1]")
    scope = data.get("scope", "camera")
    if scope not in SCOPES:
        raise ConfigError(f"eval.scope: expected one of {', '.join(SCOPES)}, got {scope!r}")
    return iou_min, scope


def _ablate(data: Any) -> int:
    data = _block(data, "ablate")
    _reject_unknown(data, ("seeds",), "ablate")
    seeds = _integer(data.get("seeds", 30), "ablate.seeds")
    if seeds < 1:
        raise ConfigError("ablate.seeds: must be >= 1")
    return seeds


BLOCKS = ("quality", "mct", "projection", "sim", "eval", "ablate")


def config_from_dict(data: Any) -> RunConfig:
    data = _block(data, "config")
    _reject_unknown(data, BLOCKS, "config")
    projection = _block(data.get("projection", {}), "projection")
    _reject_unknown(projection, ("r0", "k", "rig"), "projection")
    quality, metric = _quality(data.get("quality", {}))
    mct, new_track_iou = _mct(data.get("mct", {}), projection)
    rig = _rig(projection.get("rig", {}))
    sim = _sim(data.get("sim", {}), rig)
    iou_min, scope = _eval(data.get("eval", {}))
    return RunConfig(quality, metric, mct, new_track_iou, sim, iou_min, scope, _ablate(data.get("ablate", {})))


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: Optional[str | Path]) -> RunConfig:
    """Read a run configuration; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from None
    return parse_config(text, str(path))
