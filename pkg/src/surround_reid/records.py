"""Line-delimited JSON dataset and results files.

Both files start each sequence with a header line, followed by one object per
(frame, camera) in frame order and Left, Front, Right camera order.

Dataset lines carry the detections and ground truth a camera produced::

    {"kind": "sequence", "sequence": "s0", "seed": 0, "frames": 300, "embedding_dim": 64}
    {"kind": "frame", "sequence": "s0", "frame": 0, "camera": "left",
     "detections": [{"bbox": [cx, cy, w, h], "conf": c,
                     "keypoints": {"front": [u, v] | null, "rear": [u, v] | null} | null,
                     "embedding": [...] | null, "gt_id": g | null}],
     "gt": [{"gt_id": g, "bbox": [cx, cy, w, h], "occluded_by": o | null}]}

Camera frames in which no vehicle is present are left out; readers restore
them as empty frames. Results lines hold every camera frame's track outputs,
lifecycle events and the association decisions for targets first seen there::

    {"kind": "frame", "sequence": "s0", "frame": 0, "camera": "left",
     "outputs": [{"id": 1, "bbox": [...], "c_r": 0.9}],
     "events": [{"kind": "track_created", "id": 1}],
     "associations": [{"rank": 0, "target": 0, "region": "interior", ...}]}

Floats are written with their shortest round-tripping representation, so a
read followed by a write reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, TextIO

import numpy as np

from .core import CAMERA_ORDER, BoundingBox, CameraId, Detection, WheelKeypoints
from .errors import RecordError
from .mct import AssociationEvent, CandidateScore, ImageRegion, Inherit, NewId
from .pipeline import TickResult
from .sct import EventKind, FrameResult, TrackEvent, TrackOutput
from .sim import CameraFrame, GtObject


@dataclass
class DatasetSequence:
    sequence: str
    seed: int
    embedding_dim: int
    frames: list[dict[CameraId, CameraFrame]]

    @property
    def n_frames(self) -> int:
        return len(self.frames)


@dataclass
class ResultsSequence:
    sequence: str
    ticks: list[TickResult]

    @property
    def n_frames(self) -> int:
        return len(self.ticks)


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _point(p) -> Optional[list[float]]:
    return None if p is None else [float(p[0]), float(p[1])]


def _box(b: BoundingBox) -> list[float]:
    return [float(b.cx), float(b.cy), float(b.w), float(b.h)]


# ---------------------------------------------------------------------------
# encoding


def detection_to_dict(det: Detection) -> dict:
    kp = None
    if det.keypoints is not None:
        kp = {"front": _point(det.keypoints.front), "rear": _point(det.keypoints.rear)}
    emb = None if det.embedding is None else [float(x) for x in np.asarray(det.embedding).ravel()]
    return {"bbox": _box(det.box), "conf": float(det.conf), "keypoints": kp, "embedding": emb, "gt_id": det.gt_id}


def _camera_frame_to_dict(sequence: str, cf: CameraFrame) -> dict:
    return {
        "kind": "frame",
        "sequence": sequence,
        "frame": cf.frame,
        "camera": cf.camera.value,
        "detections": [detection_to_dict(d) for d in cf.detections],
        "gt": [{"gt_id": g.gt_id, "bbox": _box(g.box), "occluded_by": g.occluded_by} for g in cf.gt],
    }


def _candidate_to_dict(c: CandidateScore) -> dict:
    # a gated-out candidate's score is -inf, which JSON cannot hold
    s = None if c.gated_out else c.s
    return {"id": c.gid, "camera": c.camera.value, "s1": c.s1, "s2": c.s2, "s": s, "gated_out": c.gated_out}


def _association_to_dict(rank: int, ev: AssociationEvent) -> dict:
    inherit = isinstance(ev.decision, Inherit)
    return {
        "rank": rank,
        "target": ev.target_order,
        "region": ev.region.value,
        "candidate_cameras": [c.value for c in ev.candidate_cameras],
        "candidates": [_candidate_to_dict(c) for c in ev.candidates],
        "decision": "inherit" if inherit else "new_id",
        "score": ev.decision.s if inherit else None,
        "id": ev.assigned_id,
        "gt_id": ev.gt_id,
    }


def dataset_lines(sequences: Iterable[DatasetSequence]) -> Iterator[str]:
    for seq in sequences:
        yield _dump(
            {"kind": "sequence", "sequence": seq.sequence, "seed": seq.seed, "frames": seq.n_frames,
             "embedding_dim": seq.embedding_dim}
        )
        for frames in seq.frames:
            for cam in CAMERA_ORDER:
                cf = frames.get(cam)
                if cf is not None and (cf.gt or cf.detections):
                    yield _dump(_camera_frame_to_dict(seq.sequence, cf))


def results_lines(sequences: Iterable[ResultsSequence]) -> Iterator[str]:
    for seq in sequences:
        yield _dump({"kind": "sequence", "sequence": seq.sequence, "frames": seq.n_frames})
        for tick in seq.ticks:
            ranked = list(enumerate(tick.associations))
            for cam in CAMERA_ORDER:
                res = tick.results.get(cam) or FrameResult(cam, tick.frame)
                yield _dump(
                    {
                        "kind": "frame",
                        "sequence": seq.sequence,
                        "frame": tick.frame,
                        "camera": cam.value,
                        "outputs": [{"id": o.gid, "bbox": _box(o.box), "c_r": float(o.c_r)} for o in res.outputs],
                        "events": [{"kind": e.kind.value, "id": e.gid} for e in res.events],
                        "associations": [_association_to_dict(i, ev) for i, ev in ranked if ev.camera is cam],
                    }
                )


def _write(lines: Iterable[str], out: str | Path | TextIO) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            _write(lines, fh)
        return
    for line in lines:
        out.write(line)
        out.write("\n")


def write_dataset(sequences: Iterable[DatasetSequence], out: str | Path | TextIO) -> None:
    _write(dataset_lines(sequences), out)


def write_results(sequences: Iterable[ResultsSequence], out: str | Path | TextIO) -> None:
    _write(results_lines(sequences), out)


# ---------------------------------------------------------------------------
# decoding


class _Line:
    """Field access with error messages that point into the file."""

    def __init__(self, data: Any, where: str) -> None:
        if not isinstance(data, dict):
            raise RecordError(f"{where}: expected a JSON object")
        self.data = data
        self.where = where

    def get(self, key: str, kind=None, optional: bool = False):
        if key not in self.data:
            raise RecordError(f"{self.where}: missing field {key!r}")
        value = self.data[key]
        if value is None and optional:
            return None
        if kind is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif kind is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        else:
            ok = kind is None or isinstance(value, kind)
        if not ok:
            raise RecordError(f"{self.where}: field {key!r} has the wrong type")
        return float(value) if kind is float else value


def _parse_box(value: Any, where: str) -> BoundingBox:
    try:
        cx, cy, w, h = (float(v) for v in value)
        return BoundingBox(cx, cy, w, h)
    except (TypeError, ValueError) as exc:
        raise RecordError(f"{where}: bad bbox {value!r} ({exc})") from None


def _parse_point(value: Any, where: str):
    if value is None:
        return None
    try:
        x, y = (float(v) for v in value)
        return (x, y)
    except (TypeError, ValueError):
        raise RecordError(f"{where}: bad keypoint {value!r}") from None


def _parse_camera(value: Any, where: str) -> CameraId:
    try:
        return CameraId(value)
    except ValueError:
        raise RecordError(f"{where}: unknown camera {value!r}") from None


def _iter_lines(source: str | Path | TextIO) -> Iterator[tuple[str, dict]]:
    if isinstance(source, (str, Path)):
        try:
            with open(source, encoding="utf-8") as fh:
                yield from _iter_lines_from(fh, str(source))
        except OSError as exc:
            raise RecordError(f"{source}: cannot read ({exc})") from None
        return
    yield from _iter_lines_from(source, getattr(source, "name", "<stream>"))


def _iter_lines_from(fh: TextIO, name: str) -> Iterator[tuple[str, dict]]:
    for lineno, text in enumerate(fh, 1):
        where = f"{name}:{lineno}"
        if not text.strip():
            continue
        try:
            yield where, json.loads(text)
        except json.JSONDecodeError as exc:
            raise RecordError(f"{where}: {exc.msg}") from None


class _SequenceReader:
    """Checks headers, sequence ids and (frame, camera) ordering."""

    def __init__(self) -> None:
        self.header: Optional[_Line] = None
        self.last: tuple[int, int] = (-1, -1)
        self.seen: set[str] = set()

    def start(self, line: _Line) -> None:
        name = line.get("sequence", str)
        if name in self.seen:
            raise RecordError(f"{line.where}: sequence {name!r} appears twice")
        if line.get("frames", int) < 0:
            raise RecordError(f"{line.where}: negative frame count")
        self.seen.add(name)
        self.header = line
        self.last = (-1, -1)

    def frame(self, line: _Line) -> tuple[int, CameraId]:
        if self.header is None:
            raise RecordError(f"{line.where}: frame record before any sequence header")
        if line.get("sequence", str) != self.header.data["sequence"]:
            raise RecordError(f"{line.where}: record does not belong to sequence {self.header.data['sequence']!r}")
        frame = line.get("frame", int)
        cam = _parse_camera(line.get("camera", str), line.where)
        if not 0 <= frame < self.header.data["frames"]:
            raise RecordError(f"{line.where}: frame {frame} outside the sequence")
        key = (frame, cam.index)
        if key <= self.last:
            raise RecordError(f"{line.where}: records out of (frame, camera) order")
        self.last = key
        return frame, cam


def _parse_detection(line: _Line, cam: CameraId, frame: int) -> Detection:
    kp_raw = line.get("keypoints", dict, optional=True)
    keypoints = None
    if kp_raw is not None:
        front = _parse_point(kp_raw.get("front"), line.where)
        rear = _parse_point(kp_raw.get("rear"), line.where)
        if set(kp_raw) - {"front", "rear"} or (front is None and rear is None):
            raise RecordError(f"{line.where}: keypoints need front and/or rear only")
        keypoints = WheelKeypoints(front, rear)
    emb_raw = line.get("embedding", list, optional=True)
    embedding = None
    if emb_raw is not None:
        try:
            embedding = np.asarray(emb_raw, dtype=float)
        except (TypeError, ValueError):
            raise RecordError(f"{line.where}: embedding must be a list of numbers") from None
        if embedding.ndim != 1:
            raise RecordError(f"{line.where}: embedding must be a flat list")
    try:
        return Detection(
            camera=cam,
            frame=frame,
            box=_parse_box(line.get("bbox", list), line.where),
            conf=line.get("conf", float),
            keypoints=keypoints,
            embedding=embedding,
            gt_id=line.get("gt_id", int, optional=True),
        )
    except ValueError as exc:
        raise RecordError(f"{line.where}: {exc}") from None


def read_dataset(source: str | Path | TextIO) -> list[DatasetSequence]:
    out: list[DatasetSequence] = []
    reader = _SequenceReader()
    for where, raw in _iter_lines(source):
        line = _Line(raw, where)
        kind = line.get("kind", str)
        if kind == "sequence":
            reader.start(line)
            n = line.get("frames", int)
            dim = line.get("embedding_dim", int)
            out.append(DatasetSequence(line.get("sequence", str), line.get("seed", int), dim, [{} for _ in range(n)]))
        elif kind == "frame":
            frame, cam = reader.frame(line)
            dets = [
                _parse_detection(_Line(d, f"{where} detections[{i}]"), cam, frame)
                for i, d in enumerate(line.get("detections", list))
            ]
            gt = []
            for i, g in enumerate(line.get("gt", list)):
                gl = _Line(g, f"{where} gt[{i}]")
                gt.append(
                    GtObject(gl.get("gt_id", int), _parse_box(gl.get("bbox", list), gl.where), gl.get("occluded_by", int, optional=True))
                )
            out[-1].frames[frame][cam] = CameraFrame(cam, frame, dets, gt)
        else:
            raise RecordError(f"{where}: unknown record kind {kind!r}")
    for seq in out:
        for t, frames in enumerate(seq.frames):
            for cam in CAMERA_ORDER:
                frames.setdefault(cam, CameraFrame(cam, t, [], []))
            seq.frames[t] = {cam: frames[cam] for cam in CAMERA_ORDER}
    return out


def _parse_association(line: _Line, cam: CameraId, frame: int) -> tuple[int, AssociationEvent]:
    cands = []
    for i, raw in enumerate(line.get("candidates", list)):
        c = _Line(raw, f"{line.where} candidates[{i}]")
        gated_out = c.get("gated_out", bool)
        score = c.get("s", float, optional=gated_out)
        cands.append(
            CandidateScore(
                gid=c.get("id", int),
                camera=_parse_camera(c.get("camera", str), c.where),
                s1=c.get("s1", float),
                s2=c.get("s2", float, optional=True),
                s=float("-inf") if score is None else score,
                gated_out=gated_out,
            )
        )
    decision_kind = line.get("decision", str)
    if decision_kind == "inherit":
        decision = Inherit(line.get("id", int), line.get("score", float))
    elif decision_kind == "new_id":
        decision = NewId()
    else:
        raise RecordError(f"{line.where}: unknown decision {decision_kind!r}")
    try:
        region = ImageRegion(line.get("region", str))
    except ValueError:
        raise RecordError(f"{line.where}: unknown region {line.data['region']!r}") from None
    event = AssociationEvent(
        frame=frame,
        camera=cam,
        target_order=line.get("target", int),
        region=region,
        candidate_cameras=[_parse_camera(c, line.where) for c in line.get("candidate_cameras", list)],
        candidates=cands,
        decision=decision,
        assigned_id=line.get("id", int),
        gt_id=line.get("gt_id", int, optional=True),
    )
    return line.get("rank", int), event


def read_results(source: str | Path | TextIO) -> list[ResultsSequence]:
    out: list[ResultsSequence] = []
    reader = _SequenceReader()
    pending: list[list[tuple[int, AssociationEvent]]] = []
    for where, raw in _iter_lines(source):
        line = _Line(raw, where)
        kind = line.get("kind", str)
        if kind == "sequence":
            reader.start(line)
            n = line.get("frames", int)
            out.append(ResultsSequence(line.get("sequence", str), [TickResult(t, {}, []) for t in range(n)]))
            pending = [[] for _ in range(n)]
        elif kind == "frame":
            frame, cam = reader.frame(line)
            outputs = []
            for i, raw_out in enumerate(line.get("outputs", list)):
                o = _Line(raw_out, f"{where} outputs[{i}]")
                outputs.append(TrackOutput(o.get("id", int), _parse_box(o.get("bbox", list), o.where), o.get("c_r", float)))
            events = []
            for i, raw_ev in enumerate(line.get("events", list)):
                e = _Line(raw_ev, f"{where} events[{i}]")
                try:
                    events.append(TrackEvent(EventKind(e.get("kind", str)), e.get("id", int)))
                except ValueError:
                    raise RecordError(f"{e.where}: unknown event kind {e.data['kind']!r}") from None
            out[-1].ticks[frame].results[cam] = FrameResult(cam, frame, outputs, events)
            for i, raw_a in enumerate(line.get("associations", list)):
                pending[frame].append(_parse_association(_Line(raw_a, f"{where} associations[{i}]"), cam, frame))
            if cam is CAMERA_ORDER[-1]:
                ranked = sorted(pending[frame], key=lambda item: item[0])
                if [r for r, _ in ranked] != list(range(len(ranked))):
                    raise RecordError(f"{where}: association ranks of frame {frame} are not 0..{len(ranked) - 1}")
                out[-1].ticks[frame].associations = [ev for _, ev in ranked]
        else:
            raise RecordError(f"{where}: unknown record kind {kind!r}")
    for seq in out:
        for tick in seq.ticks:
            for cam in CAMERA_ORDER:
                tick.results.setdefault(cam, FrameResult(cam, tick.frame))
            tick.results = {cam: tick.results[cam] for cam in CAMERA_ORDER}
    return out
