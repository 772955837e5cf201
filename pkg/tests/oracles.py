"""Independent reference implementations used as test oracles.

Nothing here calls into the package's scoring, matching or lifecycle code;
they are written from the definitions so that agreement means something.
"""

from __future__ import annotations

import itertools
import math
from typing import Hashable, Optional, Sequence


# ---------------------------------------------------------------------------
# geometry


def corners(box) -> tuple[float, float, float, float]:
    return (box.cx - box.w / 2, box.cy - box.h / 2, box.cx + box.w / 2, box.cy + box.h / 2)


def inter_area(a, b) -> float:
    ax1, ay1, ax2, ay2 = corners(a)
    bx1, by1, bx2, by2 = corners(b)
    return max(0.0, min(ax2, bx2) - max(ax1, bx1)) * max(0.0, min(ay2, by2) - max(ay1, by1))


def iou(a, b) -> float:
    i = inter_area(a, b)
    return i / (a.w * a.h + b.w * b.h - i)


def iou_r_closed_form(dx: float, dy: float, r: float) -> float:
    """Square-overlap ratio written per axis: S = (R-|dx|)+ (R-|dy|)+."""
    s = max(0.0, r - abs(dx)) * max(0.0, r - abs(dy))
    return s / (2 * r * r - s)


# ---------------------------------------------------------------------------
# identity consistency


def _best_matching(gt, hyp, iou_min):
    """Exhaustive maximum-total-IoU partial matching."""
    weights = {
        (i, j): iou(g[1], h[1]) for i, g in enumerate(gt) for j, h in enumerate(hyp) if iou(g[1], h[1]) >= iou_min
    }
    best, best_total = [], -1.0

    def walk(i, used, chosen, total):
        nonlocal best, best_total
        if i == len(gt):
            if total > best_total:
                best, best_total = list(chosen), total
            return
        walk(i + 1, used, chosen, total)
        for j in range(len(hyp)):
            if j not in used and (i, j) in weights:
                chosen.append((i, j))
                walk(i + 1, used | {j}, chosen, total + weights[(i, j)])
                chosen.pop()

    walk(0, frozenset(), [], 0.0)
    return [(gt[i][0], hyp[j][0]) for i, j in best]


def brute_force_ic(seq, iou_min: float = 0.5, scope: str = "camera") -> tuple[int, int]:
    """(total IDSW, total ID) by the last-known-assignment rule."""
    idsw = total = 0
    shared: dict = {}
    cams = sorted(seq.cameras, key=lambda c: c.index)
    frames = sorted({fr.frame for c in cams for fr in seq.cameras[c]})
    states = {c: ({} if scope == "camera" else shared) for c in cams}
    by_key = {(c, fr.frame): fr for c in cams for fr in seq.cameras[c]}
    for t in frames:
        for c in cams:
            fr = by_key.get((c, t))
            if fr is None:
                continue
            total += len(fr.gt)
            state = states[c]
            for g, h in _best_matching(fr.gt, fr.hyp, iou_min):
                if g in state and state[g] != h:
                    idsw += 1
                state[g] = h
    return idsw, total


# ---------------------------------------------------------------------------
# association


def brute_force_decision(target, candidates, rig, alpha, beta, tau_s, r0, k, use_gate, eps=1e-6):
    """Score every (gid, camera, embeddings, keypoints) candidate and pick.

    Returns ("inherit", gid, s) or ("new",).
    """

    def log_score(d):
        return math.log(1.0 / max(d, eps) + 1.0)

    def cats(kp):
        if kp is None:
            return {}
        return {n: p for n, p in (("front", kp.front), ("rear", kp.rear)) if p is not None}

    scored = []
    tcam = rig[target.camera]
    for gid, cam, embeddings, kp in candidates:
        d_f = min(math.dist(list(target.embedding), list(e)) for e in embeddings)
        s1 = log_score(d_f)
        a, b = cats(target.ground_keypoints), cats(kp)
        shared = [n for n in a if n in b]
        if use_gate and shared:
            ok = True
            for n in shared:
                ra = r0 + k * math.dist(a[n], tcam.position)
                rb = r0 + k * math.dist(b[n], rig[cam].position)
                if math.dist(a[n], b[n]) > ra + rb:
                    ok = False
            if not ok:
                continue
        if beta > 0 and len(a) == 2 and len(b) == 2:
            s2 = log_score(math.dist(a["front"], b["front"]) + math.dist(a["rear"], b["rear"]))
            s = (alpha * s1 + beta * s2) / (alpha + beta)
        else:
            s = s1
        scored.append((gid, s))
    if not scored:
        return ("new",)
    top = max(s for _, s in scored)
    gid = min(g for g, s in scored if s == top)
    return ("inherit", gid, top) if top >= tau_s else ("new",)


# ---------------------------------------------------------------------------
# occlusion lifecycle


def occluded_ids(proposals: Sequence[tuple[Hashable, object, float]], t_o: float) -> set:
    """Occluded track ids of one camera frame from (id, box, c_r) proposals."""
    out = set()
    for (i, bi, ci), (j, bj, cj) in itertools.permutations(proposals, 2):
        oc_ij = inter_area(bi, bj) / (bi.w * bi.h)
        oc_ji = inter_area(bj, bi) / (bj.w * bj.h)
        if oc_ij > t_o:
            if oc_ji > t_o:
                # lower confidence loses; equal confidence, the larger id loses
                loser = i if (ci, -i) < (cj, -j) else j
                out.add(loser)
            else:
                out.add(i)
    return out


class LifecycleChecker:
    """Replays one camera's log and predicts deletions from occlusion runs."""

    def __init__(self, n: int, t_o: float) -> None:
        self.n = n
        self.t_o = t_o
        self.runs: dict = {}

    def step(self, alive: set, proposals) -> set:
        """Advance one frame; return the ids deleted in it."""
        placed = {p[0] for p in proposals}
        occ = occluded_ids(proposals, self.t_o) | (alive - placed)
        deleted = set()
        for gid in alive:
            if self.n == 0:
                self.runs[gid] = 0
                continue
            self.runs[gid] = self.runs.get(gid, 0) + 1 if gid in occ else 0
            if self.runs[gid] >= self.n:
                deleted.add(gid)
                del self.runs[gid]
        return deleted


def occlusion_runs_reach(flags: Sequence[bool], n: int) -> Optional[int]:
    """Index at which a run of ``n`` consecutive True first completes."""
    if n == 0:
        return None
    run = 0
    for i, f in enumerate(flags):
        run = run + 1 if f else 0
        if run >= n:
            return i
    return None
