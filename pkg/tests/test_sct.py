"""Single-camera tracking with a scripted backend.

The backend reads each frame's input as {target: (box, conf)}; a missing
target makes the tracker report itself lost.
"""

import pytest

from surround_reid import sct
from surround_reid.core import BoundingBox, CameraId, Detection
from surround_reid.quality import QualityConfig
from surround_reid.sct import EventKind, TrackerLost, UpdateMetric, create_track, process_frame

CAM = CameraId.FRONT


class ScriptedBackend:
    def __init__(self):
        self.proposals = 0
        self.reinits = 0

    def initialize(self, template, detection):
        template.payload["target"] = detection.gt_id

    def propose(self, template, frame_input):
        self.proposals += 1
        out = frame_input.get(template.payload["target"])
        if out is None:
            raise TrackerLost(template.payload["target"])
        box, conf = out
        if template.payload.get("snap") is not None:
            box = template.payload.pop("snap")
        return box, conf

    def reinitialize(self, template, box, frame_input):
        self.reinits += 1
        template.payload["snap"] = frame_input["refresh"][template.payload["target"]]


def _track(gid, box, backend, cfg):
    return create_track(Detection(CAM, 0, box, 1.0, gt_id=gid), gid, backend, cfg)


def _run(tracks, inputs, cfg, backend, metric=UpdateMetric.REID):
    results = []
    for t, frame_input in enumerate(inputs, start=1):
        res, tracks = process_frame(tracks, frame_input, cfg, backend, CAM, t, metric)
        results.append(res)
    return results, tracks


def _kinds(results, kind):
    return [(r.frame, e.gid) for r in results for e in r.events if e.kind is kind]


def test_stationary_confident_track_never_updates():
    cfg = QualityConfig()
    backend = ScriptedBackend()
    box = BoundingBox(100, 100, 40, 40)
    results, tracks = _run([_track(1, box, backend, cfg)], [{1: (box, 1.0)}] * 10, cfg, backend)
    assert not _kinds(results, EventKind.TEMPLATE_UPDATED)
    assert [len(r.outputs) for r in results] == [1] * 10
    assert results[-1].outputs[0].c_r == 1.0


def test_drifting_low_confidence_track_refreshes_once_and_reproposes():
    cfg = QualityConfig(m_window=1)
    backend = ScriptedBackend()
    start = BoundingBox(100, 100, 40, 40)
    drifted = BoundingBox(130, 100, 40, 40)  # 30 px jump: IoU_R = 2/62
    refreshed = BoundingBox(101, 100, 40, 40)
    track = _track(1, start, backend, cfg)
    results, _ = _run([track], [{1: (drifted, 0.5), "refresh": {1: refreshed}}], cfg, backend)
    assert _kinds(results, EventKind.TEMPLATE_UPDATED) == [(1, 1)]
    assert backend.reinits == 1 and backend.proposals == 2
    out = results[0].outputs[0]
    assert out.box == refreshed
    assert track.template.age == 0 and track.template.source_frame == 1


def test_tracking_metric_ignores_center_drift_confidence():
    cfg = QualityConfig(m_window=1, t1=0.4, t2=0.3)
    backend = ScriptedBackend()
    start = BoundingBox(100, 100, 40, 40)
    drifted = BoundingBox(130, 100, 40, 40)
    # raw confidence 0.5 is above t2, so the tracking metric keeps the template
    results, _ = _run([_track(1, start, backend, cfg)], [{1: (drifted, 0.5)}], cfg, backend, UpdateMetric.TRACKING)
    assert not _kinds(results, EventKind.TEMPLATE_UPDATED)


def test_six_frame_occlusion_with_n4_deletes_exactly_once():
    cfg = QualityConfig(n_occl=4, t_o=0.6)
    backend = ScriptedBackend()
    victim, occluder = BoundingBox(100, 100, 40, 40), BoundingBox(102, 100, 60, 60)
    far = BoundingBox(400, 100, 60, 60)
    tracks = [_track(1, victim, backend, cfg), _track(2, far, backend, cfg)]
    inputs = [{1: (victim, 1.0), 2: (far, 1.0)}] * 2
    inputs += [{1: (victim, 0.5), 2: (occluder, 1.0)}] * 6
    inputs += [{1: (victim, 1.0), 2: (far, 1.0)}] * 2
    results, tracks = _run(tracks, inputs, cfg, backend)
    assert _kinds(results, EventKind.TRACK_DELETED) == [(6, 1)]
    assert _kinds(results, EventKind.TRACK_OCCLUDED) == [(3, 1), (4, 1), (5, 1)]
    assert all(o.gid != 1 for r in results[5:] for o in r.outputs)
    assert [t.gid for t in tracks] == [2]


def test_lost_frames_count_toward_deletion():
    cfg = QualityConfig(n_occl=3)
    backend = ScriptedBackend()
    box = BoundingBox(100, 100, 40, 40)
    inputs = [{1: (box, 1.0)}, {}, {}, {1: (box, 1.0)}, {}, {}, {}]
    results, tracks = _run([_track(1, box, backend, cfg)], inputs, cfg, backend)
    assert _kinds(results, EventKind.TRACK_DELETED) == [(7, 1)]
    assert tracks == []


def test_n_zero_keeps_lost_tracks():
    cfg = QualityConfig(n_occl=0)
    backend = ScriptedBackend()
    box = BoundingBox(100, 100, 40, 40)
    results, tracks = _run([_track(1, box, backend, cfg)], [{}] * 20, cfg, backend)
    assert not _kinds(results, EventKind.TRACK_DELETED)
    assert len(tracks) == 1


def test_resolve_occlusions_sees_every_placed_track(monkeypatch):
    seen = []
    real = sct.resolve_occlusions
    monkeypatch.setattr(sct, "resolve_occlusions", lambda p, c: seen.append(list(p)) or real(p, c))
    cfg = QualityConfig()
    backend = ScriptedBackend()
    a, b = BoundingBox(100, 100, 40, 40), BoundingBox(300, 100, 40, 40)
    _run([_track(1, a, backend, cfg), _track(2, b, backend, cfg)], [{1: (a, 1.0)}], cfg, backend)
    assert [[(gid, box) for gid, box, _ in call] for call in seen] == [[(1, a)]]


def test_create_track_starts_visible():
    cfg = QualityConfig()
    t = _track(5, BoundingBox(1, 1, 2, 2), ScriptedBackend(), cfg)
    assert t.gid == 5 and not t.deleted and t.history.maxlen == cfg.m_window


if __name__ == "__main__":
    pytest.main([__file__])


def test_update_frames_match_hand_replay():
    from surround_reid.quality import iou_r, reid_confidence

    cfg = QualityConfig(m_window=3, t1=0.4, t2=0.3)
    backend = ScriptedBackend()
    x = [100.0]
    steps = [1, 1, 25, 30, 28, 2, 1, 26, 27, 29, 1]
    confs = [1.0, 1.0, 0.4, 0.3, 0.35, 1.0, 1.0, 0.5, 0.4, 0.45, 1.0]
    for s in steps:
        x.append(x[-1] + s)
    boxes = [BoundingBox(v, 100, 40, 40) for v in x]
    inputs = [{1: (boxes[t], confs[t - 1]), "refresh": {1: boxes[t]}} for t in range(1, len(boxes))]
    results, _ = _run([_track(1, boxes[0], backend, cfg)], inputs, cfg, backend)

    expected, window = [], []
    for t in range(1, len(boxes)):
        drift = iou_r(boxes[t - 1].center, boxes[t].center, 32.0)
        window = (window + [(drift, reid_confidence(confs[t - 1], drift))])[-3:]
        if sum(w[0] for w in window) / len(window) < 0.4 and sum(w[1] for w in window) / len(window) < 0.3:
            expected.append(t)
            window = []
    assert expected
    assert [f for f, _ in _kinds(results, EventKind.TEMPLATE_UPDATED)] == expected


def test_full_overlap_deletes_lower_confidence_at_nth_frame():
    cfg = QualityConfig(n_occl=3, t_o=0.6)
    backend = ScriptedBackend()
    a = BoundingBox(100, 100, 40, 40)
    tracks = [_track(1, a, backend, cfg), _track(2, a, backend, cfg)]
    inputs = [{1: (a, 0.9), 2: (a, 0.5)}] * 5
    results, tracks = _run(tracks, inputs, cfg, backend)
    assert _kinds(results, EventKind.TRACK_DELETED) == [(3, 2)]
    assert [t.gid for t in tracks] == [1]
