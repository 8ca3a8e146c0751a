"""Brute-force PartPQ / PQ used as a test oracle.

Deliberately naive: every gt x pred segment pair is compared by rescanning
full-image boolean masks, and every part class of every pair by another
rescan. Nothing here is shared with the fast evaluator except the data
containers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from partpq.codec import LabelMap
from partpq.report import Aggregate, ClassScore, EvalReport
from partpq.spec import DatasetSpec

BACKGROUND = -1


@dataclass
class RefClassTally:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    ignored: int = 0
    ious: list[float] = field(default_factory=list)


def _segments(m: LabelMap, spec: DatasetSpec) -> dict[tuple[int, int], np.ndarray]:
    segs = {}
    seen = set(zip(m.sid.ravel().tolist(), m.iid.ravel().tolist()))
    for sid, iid in sorted(seen):
        if sid not in spec.by_sid or not spec[sid].evaluate:
            continue
        if spec[sid].is_things and iid < 0:
            continue
        if not spec[sid].is_things:
            iid = -1
        mask = (m.sid == sid) & (m.iid == iid) if spec[sid].is_things else (m.sid == sid)
        segs[(sid, iid)] = mask
    return segs


def _ignore(gt: LabelMap, spec: DatasetSpec) -> np.ndarray:
    ign = np.ones(gt.shape, bool)
    for c in spec.scene_classes:
        if not c.evaluate:
            continue
        if c.is_things:
            ign &= ~((gt.sid == c.sid) & (gt.iid >= 0))
        else:
            ign &= gt.sid != c.sid
    return ign


def reference_part_iou(
    gmask: np.ndarray, pmask: np.ndarray, gt: LabelMap, pred: LabelMap, pids: list[int], universe: str
) -> float:
    union_region = gmask | pmask
    gl = np.where(gmask, gt.pid, BACKGROUND)
    pl = np.where(pmask, pred.pid, BACKGROUND)
    valid = union_region & ~(gmask & (gt.pid == 0))
    scores = []
    for c in [BACKGROUND] + sorted(pids):
        inter = int(np.sum(valid & (gl == c) & (pl == c)))
        union = int(np.sum(valid & ((gl == c) | (pl == c))))
        if union:
            scores.append(inter / union)
        elif universe == "all" and c != BACKGROUND:
            scores.append(0.0)
    return sum(scores) / len(scores) if scores else 0.0


def reference_tallies(
    gt: LabelMap,
    pred: LabelMap,
    spec: DatasetSpec,
    part_iou: bool = True,
    require_parts: bool = True,
    universe: str = "present",
) -> dict[int, RefClassTally]:
    if gt.shape != pred.shape:
        raise ValueError(f"dimension mismatch: {gt.shape} vs {pred.shape}")
    ignore = _ignore(gt, spec)
    gsegs = _segments(gt, spec)
    psegs = _segments(pred, spec)
    out = {sid: RefClassTally() for sid in spec.by_sid if spec[sid].evaluate}

    matched_pred = set()
    for (gsid, giid), gm in gsegs.items():
        cls = spec[gsid]
        skip = require_parts and cls.has_parts and not np.any(gt.pid[gm] > 0)
        hit = None
        for (psid, piid), pm in psegs.items():
            if psid != gsid:
                continue
            pm_eff = pm & ~ignore
            inter = int(np.sum(gm & pm_eff))
            union = int(np.sum(gm | pm_eff))
            if union and inter / union > 0.5:
                assert hit is None, "two predictions matched one gt segment"
                hit = ((psid, piid), inter / union)
        if skip:
            out[gsid].ignored += 1
            if hit is not None:
                matched_pred.add(hit[0])
            continue
        if hit is None:
            out[gsid].fn += 1
            continue
        assert hit[0] not in matched_pred, "prediction matched twice"
        matched_pred.add(hit[0])
        out[gsid].tp += 1
        if part_iou and cls.has_parts:
            pm_eff = psegs[hit[0]] & ~ignore
            out[gsid].ious.append(reference_part_iou(gm, pm_eff, gt, pred, sorted(cls.pids), universe))
        else:
            out[gsid].ious.append(hit[1])

    for key, pm in psegs.items():
        if key in matched_pred:
            continue
        if 2 * int(np.sum(pm & ignore)) > int(np.sum(pm)):
            continue
        out[key[0]].fp += 1
    return out


def _report(tallies: dict[int, RefClassTally], spec: DatasetSpec, metric: str) -> EvalReport:
    classes = []
    for sid in sorted(tallies):
        t = tallies[sid]
        s = sum(t.ious)
        n = t.tp + t.fp + t.fn
        d = t.tp + (t.fp + t.fn) / 2
        classes.append(
            ClassScore(
                sid=sid,
                name=spec[sid].name,
                pq=s / d if n else 0.0,
                sq=s / t.tp if t.tp else 0.0,
                rq=t.tp / d if n else 0.0,
                tp=t.tp,
                fp=t.fp,
                fn=t.fn,
                sum_iou=s,
                defined=n > 0,
            )
        )
    groups = {
        "All": lambda c: True,
        "P": lambda c: c.has_parts,
        "NP": lambda c: not c.has_parts,
        "Things": lambda c: c.is_things,
        "Stuff": lambda c: not c.is_things,
    }
    aggregates = {}
    for name, pick in groups.items():
        chosen = [c for c in classes if c.defined and pick(spec[c.sid])]
        k = len(chosen)
        aggregates[name] = Aggregate(
            pq=sum(c.pq for c in chosen) / k if k else None,
            sq=sum(c.sq for c in chosen) / k if k else None,
            rq=sum(c.rq for c in chosen) / k if k else None,
            n=k,
        )
    return EvalReport(metric=metric, classes=classes, aggregates=aggregates)


def reference_evaluate(
    gt: LabelMap,
    pred: LabelMap,
    spec: DatasetSpec,
    options=None,
    metric: str = "PartPQ",
) -> EvalReport:
    """Slow, independent PartPQ (or PQ with ``metric="PQ"``) for one image."""
    universe = getattr(options, "part_universe", "present")
    require = getattr(options, "require_parts", True)
    if metric == "PQ":
        t = reference_tallies(gt, pred, spec, part_iou=False, require_parts=False)
    else:
        t = reference_tallies(gt, pred, spec, part_iou=True, require_parts=require, universe=universe)
    return _report(t, spec, metric)
