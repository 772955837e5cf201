import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force_ic
from surround_reid.core import BoundingBox, CameraId
from surround_reid.metrics import EvalFrame, EvalSequence, IcReport, count_idsw, match_frame

B = BoundingBox


def test_match_frame_is_optimal_not_greedy():
    gt = [(1, B(0, 0, 10, 10)), (2, B(1, 0, 10, 10))]
    hyp = [(10, B(-2, 0, 9, 10)), (20, B(0, 0, 12, 10))]
    assert match_frame(gt, hyp) == {(1, 10), (2, 20)}


def test_match_frame_threshold_inclusive():
    gt = [(1, B(0, 0, 12, 10))]
    # overlap 8 of width 12: IoU exactly 8 / 16
    assert match_frame(gt, [(5, B(4, 0, 12, 10))]) == {(1, 5)}
    assert match_frame(gt, [(5, B(4.5, 0, 12, 10))]) == set()
    with pytest.raises(ValueError):
        match_frame(gt, gt, 0.0)


def test_unknown_scope_rejected():
    with pytest.raises(ValueError):
        count_idsw(EvalSequence(), scope="world")


def test_empty_sequence_has_undefined_ic():
    rep = count_idsw(EvalSequence())
    assert rep.ic is None and rep.as_dict()["ic"] is None


def test_per_frame_counts_and_dict():
    box = B(0, 0, 10, 10)
    seq = EvalSequence({CameraId.LEFT: [EvalFrame(0, [(1, box)], [(5, box)]), EvalFrame(3, [(1, box)], [(6, box)])]})
    rep = count_idsw(seq)
    assert rep.idsw_per_frame == {3: 1}
    assert rep.ic == 0.5
    d = rep.as_dict()
    assert d["idsw_per_frame"] == {"3": 1} and d["per_camera"]["left"]["total_id"] == 2


tracks = st.lists(st.lists(st.sampled_from([None, "a", "b", "c"]), min_size=3, max_size=3), min_size=1, max_size=8)


def _seq(rows, rename=lambda h: h):
    frames = []
    for t, row in enumerate(rows):
        gt, hyp = [], []
        used = set()
        for g, h in enumerate(row, start=1):
            box = B(100.0 * g, 0, 20, 20)
            gt.append((g, box))
            if h is not None and h not in used:
                used.add(h)
                hyp.append((rename(h), box))
        frames.append(EvalFrame(t, gt, hyp))
    return EvalSequence({CameraId.FRONT: frames})


@given(tracks, st.permutations(["x", "y", "z"]))
def test_ic_invariant_under_relabelling(rows, perm):
    mapping = dict(zip("abc", perm))
    a = count_idsw(_seq(rows))
    b = count_idsw(_seq(rows, mapping.get))
    assert (a.total_idsw, a.total_id) == (b.total_idsw, b.total_id)
    assert (a.total_idsw, a.total_id) == brute_force_ic(_seq(rows))


@given(tracks)
def test_ic_bounds(rows):
    rep = count_idsw(_seq(rows))
    assert 0.0 <= rep.ic <= 1.0


def test_report_totals_are_sums_of_cameras():
    box = B(0, 0, 10, 10)
    seq = EvalSequence({
        CameraId.LEFT: [EvalFrame(0, [(1, box)], [(5, box)]), EvalFrame(1, [(1, box)], [(6, box)])],
        CameraId.RIGHT: [EvalFrame(0, [(1, box)], [(5, box)])],
    })
    for scope in ("camera", "global"):
        rep = count_idsw(seq, scope=scope)
        assert rep.total_idsw == sum(r.total_idsw for r in rep.per_camera.values())
        assert rep.total_id == sum(r.total_id for r in rep.per_camera.values()) == 3
    assert isinstance(rep, IcReport)
