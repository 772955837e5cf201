import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from surround_reid.core import BoundingBox, CameraId, Detection, WheelKeypoints
from surround_reid.errors import ConfigError, DomainError, LifecycleError, NoCandidates
from surround_reid.mct import (
    FusionWeights,
    Gallery,
    ImageRegion,
    Inherit,
    MctConfig,
    NewId,
    NewTarget,
    associate,
    candidate_cameras,
    feature_distance,
    fuse,
    region_of,
    run_association_pass,
    score_s1,
    score_s2,
    update_gallery,
)
from surround_reid.sim import default_rig

L, F, R = CameraId.LEFT, CameraId.FRONT, CameraId.RIGHT
RIG = default_rig()


def target(cam=F, emb=(0.0, 0.0), kp=None, cx=640.0, gt=None, order=0):
    det = Detection(cam, 0, BoundingBox(cx, 360, 80, 60), 1.0, gt_id=gt)
    return NewTarget(det, np.asarray(emb, dtype=float), kp, region_of(det, RIG[cam]), order)


def test_feature_distance_is_min_over_gallery():
    q = np.zeros(2)
    assert feature_distance(q, [np.array([3.0, 4.0]), np.array([0.6, 0.8])]) == pytest.approx(1.0)
    with pytest.raises(NoCandidates):
        feature_distance(q, [])


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_scores_decrease_with_distance(a, b):
    lo, hi = min(a, b), max(a, b)
    assert score_s1(lo) >= score_s1(hi) > 0
    assert score_s2(lo) >= score_s2(hi) > 0


def test_score_clamps_zero_distance_and_rejects_negative():
    assert score_s1(0.0) == score_s1(1e-9) == math.log(1e6 + 1)
    with pytest.raises(DomainError):
        score_s2(-1.0)


@given(st.floats(0, 20), st.floats(0, 20), st.floats(0, 5), st.floats(0.01, 5))
def test_fuse_lies_between_scores(s1, s2, a, b):
    v = fuse(s1, s2, FusionWeights(a, b))
    assert min(s1, s2) - 1e-9 <= v <= max(s1, s2) + 1e-9


def test_fusion_weights_validated():
    with pytest.raises(ConfigError):
        FusionWeights(-1, 1)
    with pytest.raises(ConfigError):
        FusionWeights(0, 0)


def test_regions():
    cam = RIG[F]
    assert region_of(Detection(F, 0, BoundingBox(100, 300, 10, 10), 1), cam) is ImageRegion.LEFT_EDGE
    assert region_of(Detection(F, 0, BoundingBox(320, 300, 10, 10), 1), cam) is ImageRegion.INTERIOR
    assert region_of(Detection(F, 0, BoundingBox(960, 300, 10, 10), 1), cam) is ImageRegion.INTERIOR
    assert region_of(Detection(F, 0, BoundingBox(1000, 300, 10, 10), 1), cam) is ImageRegion.RIGHT_EDGE


@pytest.mark.parametrize(
    "cam, region, expected",
    [
        (L, ImageRegion.LEFT_EDGE, [L]),
        (L, ImageRegion.INTERIOR, [F]),
        (L, ImageRegion.RIGHT_EDGE, [F]),
        (R, ImageRegion.RIGHT_EDGE, [R]),
        (R, ImageRegion.INTERIOR, [F]),
        (R, ImageRegion.LEFT_EDGE, [F]),
        (F, ImageRegion.LEFT_EDGE, [L]),
        (F, ImageRegion.RIGHT_EDGE, [R]),
        (F, ImageRegion.INTERIOR, []),
    ],
)
def test_candidate_cameras(cam, region, expected):
    assert candidate_cameras(cam, region) == expected


def test_gallery_keeps_last_k_and_latest_keypoints():
    g = Gallery(k=2)
    for i in range(4):
        update_gallery(g, 1, L, np.array([float(i)]), WheelKeypoints(front=(i, 0)) if i < 3 else None, i)
    e = g.entry(1, L)
    assert [float(x[0]) for x in e.embeddings] == [2.0, 3.0]
    assert e.keypoints == WheelKeypoints(front=(2, 0)) and e.keypoint_frame == 2 and e.last_frame == 3


def test_deleted_identity_cannot_be_written():
    g = Gallery()
    update_gallery(g, 1, L, np.zeros(2), None, 0)
    g.delete_id(1)
    assert g.entry(1, L) is None
    with pytest.raises(LifecycleError):
        update_gallery(g, 1, L, np.zeros(2), None, 1)


def test_gallery_expiry_spares_live_ids():
    g = Gallery()
    update_gallery(g, 1, L, np.zeros(2), None, 0)
    update_gallery(g, 2, L, np.zeros(2), None, 0)
    assert g.expire(100, 90, live_ids={2}) == [1]
    assert g.ids() == {2} and g.is_deleted(1)


def test_inherit_requires_tau():
    g = Gallery()
    update_gallery(g, 4, L, np.array([1.0, 0.0]), None, 0)  # d = 1, s = ln 2
    t = target(emb=(0.0, 0.0), cx=100)
    assert associate(t, g, [L], RIG, MctConfig(tau_s=math.log(2.0))).decision == Inherit(4, math.log(2.0))
    assert associate(t, g, [L], RIG, MctConfig(tau_s=0.7)).decision == NewId()


def test_ties_go_to_smaller_id_and_exclusions_apply():
    g = Gallery()
    for gid in (9, 3, 5):
        update_gallery(g, gid, L, np.array([0.5, 0.0]), None, 0)
    t = target(cx=100)
    assert associate(t, g, [L], RIG, MctConfig()).decision.gid == 3
    assert associate(t, g, [L], RIG, MctConfig(), exclude={3}).decision.gid == 5


def test_gated_candidate_never_inherits():
    g = Gallery()
    update_gallery(g, 1, L, np.array([0.0, 0.0]), WheelKeypoints(front=(30.0, 0.0)), 0)
    update_gallery(g, 2, L, np.array([3.0, 0.0]), WheelKeypoints(front=(5.0, 5.0)), 0)
    t = target(emb=(0.0, 0.0), kp=WheelKeypoints(front=(5.0, 5.1)), cx=100)
    res = associate(t, g, [L], RIG, MctConfig(tau_s=0.1))
    by_id = {c.gid: c for c in res.candidates}
    assert by_id[1].gated_out and by_id[1].s == float("-inf")
    assert res.decision.gid == 2
    assert associate(t, g, [L], RIG, MctConfig(tau_s=0.1, use_gate=False)).decision.gid == 1


def test_s2_only_with_both_categories_on_both_sides():
    g = Gallery()
    update_gallery(g, 1, L, np.array([1.0, 0.0]), WheelKeypoints((0.0, 5.0), (2.7, 5.0)), 0)
    full = target(kp=WheelKeypoints((0.0, 5.0), (2.7, 5.0)), cx=100)
    half = target(kp=WheelKeypoints(front=(0.0, 5.0)), cx=100)
    c_full = associate(full, g, [L], RIG, MctConfig()).candidates[0]
    c_half = associate(half, g, [L], RIG, MctConfig()).candidates[0]
    assert c_full.s2 == pytest.approx(math.log(1e6 + 1))
    assert c_full.s == pytest.approx((math.log(2) + math.log(1e6 + 1)) / 2)
    assert c_half.s2 is None and c_half.s == pytest.approx(math.log(2))


def test_empty_candidate_set_gives_new_id():
    assert associate(target(), Gallery(), [], RIG, MctConfig()).decision == NewId()


def test_association_pass_orders_pairings_and_shares_state():
    g = Gallery()
    ids = iter(range(100, 200))
    emb = (1.0, 1.0)
    bundle = {
        R: [target(R, emb, cx=300, gt=7)],   # right interior looks at front
        F: [target(F, emb, cx=640, gt=7)],   # front interior: always new
        L: [target(L, emb, cx=100, gt=8, order=0)],
    }
    live = {}
    events = run_association_pass(bundle, g, RIG, MctConfig(), lambda: next(ids), live, 0)
    # left/front pairings resolve before front/right ones
    assert [e.camera for e in events] == [L, F, R]
    assert [e.assigned_id for e in events] == [100, 101, 101]
    assert isinstance(events[2].decision, Inherit)
    assert live == {L: {100}, F: {101}, R: {101}}


def test_feature_distance_three_four_five():
    assert feature_distance(np.zeros(4), [np.array([3.0, 4.0, 0.0, 0.0])]) == 5.0


def test_lookalikes_resolved_by_gate():
    g = Gallery()
    emb = np.array([0.5, 0.0])
    # same embedding, so s1 is equal; only candidate 2 sits where the target is
    update_gallery(g, 1, F, emb, WheelKeypoints((20.0, 5.0), (17.3, 5.0)), 0)
    update_gallery(g, 2, F, emb, WheelKeypoints((0.1, 5.0), (-2.6, 5.0)), 0)
    t = target(L, emb=(0.0, 0.0), kp=WheelKeypoints((0.0, 5.0), (-2.7, 5.0)), cx=640)
    res = associate(t, g, [F], RIG, MctConfig())
    by_id = {c.gid: c for c in res.candidates}
    assert by_id[1].s1 == by_id[2].s1
    assert by_id[1].gated_out and not by_id[2].gated_out
    assert by_id[2].s2 == pytest.approx(math.log(1 / 0.2 + 1))
    assert res.decision.gid == 2
