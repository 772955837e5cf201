"""Scenario bundles and ablation studies over the simulator."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .core import CameraId
from .errors import ConfigError
from .mct import DetectionEmbeddings, FusionWeights, Inherit
from .metrics import EvalFrame, EvalSequence, IcReport, count_idsw
from .pipeline import PipelineConfig, SurroundPipeline, TickResult
from .sct import EventKind, UpdateMetric
from .sim import (
    CameraFrame,
    EmbeddingConfig,
    LookalikePair,
    NoiseConfig,
    OcclusionEpisode,
    OracleTracker,
    ScenarioConfig,
    TrafficConfig,
    default_rig,
    generate_world,
    render_sequence,
)

THREADS_ENV = "SURROUND_REID_THREADS"
N_SWEEP = (0, 2, 3, 4, 5, 6, 8)


def worker_count(requested: Optional[int] = None) -> int:
    """Worker processes to use, capped by SURROUND_REID_THREADS when set."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {cap!r}") from None
    return max(1, n)


# ---------------------------------------------------------------------------
# scenario bundles


def drift_bundle(seed: int) -> ScenarioConfig:
    """Clean detections, strongly drifting tracker: template policy dominates IC."""
    return ScenarioConfig(
        seed=seed,
        n_vehicles=4,
        duration_frames=300,
        noise=NoiseConfig(
            drift_sigma=1.0,
            edge_noise_gain=1.0,
            age_gain=0.05,
            jitter_ratio=2.5,
            scale_sigma=0.15,
            conf_scale=0.2,
            size_conf=20.0,
        ),
        embedding=EmbeddingConfig(identity_sigma=0.05, camera_view_sigma=0.1),
    )


def occlusion_bundle(seed: int) -> ScenarioConfig:
    """Scripted occlusion episodes of mixed length against a mostly stable tracker."""
    rng = np.random.default_rng([seed, 0x0CC])
    n_vehicles, duration = 4, 300
    episodes = []
    for vehicle in range(1, n_vehicles + 1):
        start = int(rng.integers(20, 60))
        while start < duration - 20:
            length = int(rng.integers(2, 11))
            episodes.append(OcclusionEpisode(vehicle, start, length))
            start += length + int(rng.integers(25, 60))
    return ScenarioConfig(
        seed=seed,
        n_vehicles=n_vehicles,
        duration_frames=duration,
        noise=NoiseConfig(drift_sigma=0.3, recover_frames=4, occlusions=tuple(episodes)),
        embedding=EmbeddingConfig(identity_sigma=0.05, camera_view_sigma=0.1),
    )


def lookalike_bundle(seed: int) -> ScenarioConfig:
    """Families of near-identical vehicles handed between cameras.

    Every vehicle from 3 on is a lookalike of vehicle 1 or 2, so appearance
    alone is ambiguous at handoff. Some cameras never see a vehicle's wheels,
    which leaves the spatial score unavailable for that pair.
    """
    n_vehicles = 8
    pairs = tuple(LookalikePair(1 + (i % 2), i, 0.1) for i in range(3, n_vehicles + 1))
    return ScenarioConfig(
        seed=seed,
        n_vehicles=n_vehicles,
        duration_frames=300,
        rig=default_rig(calib_noise_sigma=0.05),
        traffic=TrafficConfig(lanes=(5.0, -5.0), speed_min=1.5, speed_max=2.5, min_visible_fraction=1.0),
        noise=NoiseConfig(kp_jitter=0.05, kp_dropout=0.1, wheel_occlusion=0.3),
        embedding=EmbeddingConfig(identity_sigma=0.15, camera_view_sigma=0.4, lookalike_pairs=pairs),
    )


BUNDLES: dict[str, Callable[[int], ScenarioConfig]] = {
    "drift": drift_bundle,
    "occlusion": occlusion_bundle,
    "lookalike": lookalike_bundle,
}


# ---------------------------------------------------------------------------
# single runs


@dataclass
class RunOutcome:
    report: IcReport
    template_updates: int
    deletions: int
    inherits: int
    correct_inherits: int

    @property
    def ic(self) -> float:
        return float("nan") if self.report.ic is None else self.report.ic

    @property
    def match_accuracy(self) -> float:
        return float("nan") if self.inherits == 0 else self.correct_inherits / self.inherits


def eval_sequence(frames: Sequence[dict[CameraId, CameraFrame]], ticks: Sequence[TickResult]) -> EvalSequence:
    """Pair visible ground truth with pipeline outputs, per camera and frame."""
    seq = EvalSequence()
    for fr, tick in zip(frames, ticks):
        for cam in CameraId.ordered():
            gt = [(g.gt_id, g.box) for g in fr[cam].visible_gt()]
            hyp = [(o.gid, o.box) for o in tick.results[cam].outputs]
            seq.frames(cam).append(EvalFrame(tick.frame, gt, hyp))
    return seq


def inherit_accuracy(ticks: Sequence[TickResult]) -> tuple[int, int]:
    """(inherit decisions, those whose identity was created for the same vehicle)."""
    owner: dict[int, Optional[int]] = {}
    total = correct = 0
    for tick in ticks:
        for ev in tick.associations:
            if isinstance(ev.decision, Inherit):
                total += 1
                correct += int(owner.get(ev.assigned_id) == ev.gt_id and ev.gt_id is not None)
            else:
                owner[ev.assigned_id] = ev.gt_id
    return total, correct


def run_scenario(scenario: ScenarioConfig, cfg: PipelineConfig, iou_min: float = 0.5, scope: str = "camera") -> RunOutcome:
    world = generate_world(scenario)
    frames = list(render_sequence(world))
    pipe = SurroundPipeline(
        scenario.rig,
        cfg,
        OracleTracker(scenario.rig, scenario.noise, scenario.seed),
        DetectionEmbeddings(scenario.embedding.dim),
    )
    ticks = pipe.run(frames)
    kinds = [ev.kind for tick in ticks for res in tick.results.values() for ev in res.events]
    total, correct = inherit_accuracy(ticks)
    return RunOutcome(
        report=count_idsw(eval_sequence(frames, ticks), iou_min, scope),
        template_updates=kinds.count(EventKind.TEMPLATE_UPDATED),
        deletions=kinds.count(EventKind.TRACK_DELETED),
        inherits=total,
        correct_inherits=correct,
    )


# ---------------------------------------------------------------------------
# studies


@dataclass(frozen=True)
class Variant:
    name: str
    cfg: PipelineConfig


@dataclass
class StudyRow:
    variant: str
    metric: str
    values: list[float]
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    extra: dict = field(default_factory=dict)
    point: Optional[float] = None

    @property
    def mean(self) -> float:
        """Headline value: pooled estimate when one exists, else the seed mean."""
        return float(np.mean(self.values)) if self.point is None else float(self.point)


@dataclass
class StudyResult:
    study: str
    seeds: list[int]
    rows: list[StudyRow]

    def row(self, variant: str) -> StudyRow:
        return next(r for r in self.rows if r.variant == variant)


def bootstrap_ci(values: Sequence[float], confidence: float = 0.95, seed: int = 0) -> tuple[float, float]:
    data = np.asarray(values, dtype=float)
    if len(data) < 2 or np.all(data == data[0]):
        return float(data.mean()), float(data.mean())
    res = stats.bootstrap(
        (data,), np.mean, confidence_level=confidence, n_resamples=2000, method="percentile",
        random_state=np.random.default_rng(seed),
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def table1_variants(base: PipelineConfig) -> list[Variant]:
    q = base.quality
    return [
        # thresholds of zero can never be undercut, so templates stay fixed
        Variant("Default", replace(base, quality=replace(q, t1=0.0, t2=0.0))),
        Variant("IoU_T/C_T", replace(base, update_metric=UpdateMetric.TRACKING)),
        Variant("IoU_R/C_R", replace(base, update_metric=UpdateMetric.REID)),
    ]


def table2_variants(base: PipelineConfig, n_values: Sequence[int] = N_SWEEP) -> list[Variant]:
    return [Variant(f"N={n}", replace(base, quality=replace(base.quality, n_occl=n))) for n in n_values]


def table3_variants(base: PipelineConfig) -> list[Variant]:
    m = base.mct
    return [
        Variant("feature", replace(base, mct=replace(m, weights=FusionWeights(m.weights.alpha or 1.0, 0.0), use_gate=False))),
        Variant("feature+gate", replace(base, mct=replace(m, weights=FusionWeights(m.weights.alpha or 1.0, 0.0), use_gate=True))),
        Variant("feature+gate+s2", replace(base, mct=replace(m, use_gate=True))),
    ]


STUDIES = {
    "table1": ("drift", table1_variants, "ic"),
    "table2": ("occlusion", table2_variants, "ic"),
    "table3": ("lookalike", table3_variants, "match_accuracy"),
}


def _job(args):
    bundle, seed, cfg, iou_min, scope = args
    return run_scenario(BUNDLES[bundle](seed), cfg, iou_min, scope)


def run_study(
    study: str,
    seeds: Sequence[int],
    base: Optional[PipelineConfig] = None,
    workers: Optional[int] = None,
    iou_min: float = 0.5,
    scope: str = "camera",
) -> StudyResult:
    if study not in STUDIES:
        raise KeyError(study)
    bundle, make_variants, metric = STUDIES[study]
    variants = make_variants(base or PipelineConfig())
    jobs = [(bundle, seed, v.cfg, iou_min, scope) for v in variants for seed in seeds]
    n = min(worker_count(workers), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            outcomes = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * n))))
    else:
        outcomes = [_job(j) for j in jobs]

    rows = []
    for i, v in enumerate(variants):
        chunk = outcomes[i * len(seeds):(i + 1) * len(seeds)]
        values = [getattr(o, metric) for o in chunk]
        extra = {
            "ic": float(np.mean([o.ic for o in chunk])),
            "template_updates": int(sum(o.template_updates for o in chunk)),
            "deletions": int(sum(o.deletions for o in chunk)),
            "idsw": int(sum(o.report.total_idsw for o in chunk)),
        }
        point = None
        if metric == "match_accuracy":
            # seeds without a handoff have no accuracy; pool decisions instead
            inherits = sum(o.inherits for o in chunk)
            extra["inherits"] = int(inherits)
            point = sum(o.correct_inherits for o in chunk) / inherits if inherits else float("nan")
            values = [x for x in values if not np.isnan(x)]
        low, high = bootstrap_ci(values) if values else (float("nan"), float("nan"))
        rows.append(StudyRow(v.name, metric, values, low, high, extra, point))
    return StudyResult(study, list(seeds), rows)
