"""Hand-built scenes with machine-checkable expected facts.

All fixtures use the shipped Cityscapes-parts spec (road 7, sky 23, person 24,
car 26).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from partpq.codec import NO_INSTANCE, LabelMap
from partpq.harness.reference import reference_evaluate
from partpq.merging import PartPrediction, merge_conservative, merge_topdown
from partpq.segments import instance_iou, match_segments, segment_map
from partpq.spec import DatasetSpec, builtin_spec

ROAD, SKY, PERSON, CAR = 7, 23, 24, 26
# car parts
WINDOW, WHEEL, LIGHT, PLATE, CHASSIS = 1, 2, 3, 4, 5
# person parts
TORSO, HEAD, ARM, LEG = 1, 2, 3, 4


@dataclass(eq=False)
class Fixture:
    name: str
    spec: DatasetSpec
    gt: LabelMap
    pred: LabelMap
    facts: dict[str, Any]
    panoptic: LabelMap | None = None
    parts: PartPrediction | None = None
    checks: dict[str, Callable[["Fixture"], Any]] = field(default_factory=dict, repr=False)

    def check(self) -> dict[str, bool]:
        """Evaluate every fact; True where the observed value equals the expected one."""
        return {k: self.checks[k](self) == v for k, v in self.facts.items()}

    def observed(self) -> dict[str, Any]:
        return {k: self.checks[k](self) for k in self.facts}


def _paint(m: LabelMap, rows: slice, cols: slice, sid: int, iid: int = NO_INSTANCE, pid: int = 0) -> None:
    m.sid[rows, cols] = sid
    m.iid[rows, cols] = iid
    m.pid[rows, cols] = pid


def _match(fx: Fixture, require_parts: bool = True):
    g = segment_map(fx.gt, fx.spec)
    p = segment_map(fx.pred, fx.spec)
    return match_segments(g.segments, p.segments, g.ignore, fx.spec, require_parts=require_parts)


def _class_count(attr: str, sid: int) -> Callable[[Fixture], int]:
    return lambda fx: sum(1 for s in getattr(_match(fx), attr) if (s[0] if isinstance(s, tuple) else s).sid == sid)


def _exact_half_iou(spec: DatasetSpec) -> Fixture:
    gt = LabelMap.empty(4, 4)
    _paint(gt, slice(None), slice(None), ROAD)
    _paint(gt, slice(0, 1), slice(0, 3), CAR, 1, CHASSIS)
    pred = LabelMap.empty(4, 4)
    _paint(pred, slice(None), slice(None), SKY)
    _paint(pred, slice(0, 1), slice(1, 4), CAR, 1, CHASSIS)

    def car_iou(fx: Fixture) -> float:
        g = [s for s in segment_map(fx.gt, fx.spec).segments if s.sid == CAR][0]
        pseg = segment_map(fx.pred, fx.spec)
        p = [s for s in pseg.segments if s.sid == CAR][0]
        return instance_iou(g, p, segment_map(fx.gt, fx.spec).ignore)

    return Fixture(
        "exact-half-iou",
        spec,
        gt,
        pred,
        facts={"tp": 0, "car_iou": 0.5, "car_fp": 1, "car_fn": 1},
        checks={
            "tp": lambda fx: len(_match(fx).tp),
            "car_iou": car_iou,
            "car_fp": _class_count("fp", CAR),
            "car_fn": _class_count("fn", CAR),
        },
    )


def _partless_gt(spec: DatasetSpec) -> Fixture:
    gt = LabelMap.empty(8, 8)
    _paint(gt, slice(None), slice(None), ROAD)
    _paint(gt, slice(2, 6), slice(1, 6), CAR, 0)  # 20 px, no part labels
    pred = gt.copy()
    pred.pid[2:6, 1:6] = CHASSIS
    # drop two car pixels -> IOU 18 / 20
    _paint(pred, slice(5, 6), slice(4, 6), ROAD)

    return Fixture(
        "partless-gt",
        spec,
        gt,
        pred,
        facts={"ignored_gt": 1, "car_fn": 0, "car_fp": 0, "car_tp": 0, "car_pair_iou": 0.9},
        checks={
            "ignored_gt": lambda fx: len(_match(fx).ignored_gt),
            "car_fn": _class_count("fn", CAR),
            "car_fp": _class_count("fp", CAR),
            "car_tp": _class_count("tp", CAR),
            "car_pair_iou": lambda fx: _match(fx, require_parts=False).counts()[CAR][0]
            and [i for g, _, i in _match(fx, require_parts=False).tp if g.sid == CAR][0],
        },
    )


def _void_heavy(spec: DatasetSpec) -> Fixture:
    gt = LabelMap.empty(8, 8)
    _paint(gt, slice(None), slice(0, 4), ROAD)  # right half stays void
    pred = LabelMap.empty(8, 8)
    _paint(pred, slice(None), slice(0, 4), ROAD)
    _paint(pred, slice(None), slice(5, 8), CAR, 0, CHASSIS)  # entirely on void
    _paint(pred, slice(0, 1), slice(2, 5), SKY)  # 3 px, one on void
    return Fixture(
        "void-heavy",
        spec,
        gt,
        pred,
        facts={"absorbed": 1, "fp": 1, "fn": 0, "tp": 1},
        checks={
            "absorbed": lambda fx: len(_match(fx).absorbed),
            "fp": lambda fx: len(_match(fx).fp),
            "fn": lambda fx: len(_match(fx).fn),
            "tp": lambda fx: len(_match(fx).tp),
        },
    )


def _two_objects(h: int = 16, w: int = 16) -> LabelMap:
    gt = LabelMap.empty(h, w)
    _paint(gt, slice(None), slice(None), ROAD)
    _paint(gt, slice(2, 4), slice(2, 10), CAR, 0, WINDOW)
    _paint(gt, slice(4, 8), slice(2, 10), CAR, 0, CHASSIS)
    _paint(gt, slice(8, 10), slice(2, 10), CAR, 0, WHEEL)
    _paint(gt, slice(4, 6), slice(11, 15), PERSON, 1, HEAD)
    _paint(gt, slice(6, 10), slice(11, 15), PERSON, 1, TORSO)
    _paint(gt, slice(10, 14), slice(11, 15), PERSON, 1, LEG)
    return gt


def _panoptic_only(m: LabelMap) -> LabelMap:
    out = m.copy()
    out.pid[:] = 0
    return out


def _boundary_confusion(spec: DatasetSpec) -> Fixture:
    gt = _two_objects()
    panoptic = _panoptic_only(gt)
    part_sid = gt.sid.copy()
    part_pid = gt.pid.copy()
    ring = np.zeros(gt.shape, bool)
    ring[2:10, 2:10] = True
    ring[3:9, 3:9] = False
    # the part model leaks person-arm onto the car border
    part_sid[ring] = PERSON
    part_pid[ring] = ARM
    parts = PartPrediction(sid=part_sid, pid=part_pid)
    pred = merge_topdown(panoptic, parts, spec)

    def _pq(fx: Fixture, merger) -> float:
        return reference_evaluate(fx.gt, merger(fx.panoptic, fx.parts, fx.spec), fx.spec).aggregates["All"].pq

    def _differ(fx: Fixture) -> list[int]:
        a = merge_topdown(fx.panoptic, fx.parts, fx.spec)
        b = merge_conservative(fx.panoptic, fx.parts, fx.spec)
        d = (a.sid != b.sid) | (a.iid != b.iid) | (a.pid != b.pid)
        return np.flatnonzero(d.ravel()).tolist()

    return Fixture(
        "boundary-confusion",
        spec,
        gt,
        pred,
        facts={
            "topdown_beats_conservative": True,
            "differing_pixels": np.flatnonzero(ring.ravel()).tolist(),
        },
        panoptic=panoptic,
        parts=parts,
        checks={
            "topdown_beats_conservative": lambda fx: _pq(fx, merge_topdown) > _pq(fx, merge_conservative),
            "differing_pixels": _differ,
        },
    )


def _grouped_pred(spec: DatasetSpec) -> Fixture:
    gt = _two_objects()
    panoptic = _panoptic_only(gt)
    grouping = spec.grouping("grouped")
    g_of = {gid: name for gid, name in grouping.group_names.items()}
    gid_of = {name: gid for gid, name in g_of.items()}
    gid = np.zeros(gt.shape, np.int32)
    gid[2:10, 2:10] = gid_of["wheel"]
    gid[4:14, 11:15] = gid_of["torso"]
    gid[12:14, 11:15] = gid_of["window"]  # vehicle group on a person: incompatible
    parts = PartPrediction(gid=gid, grouping=grouping)

    expected = panoptic.copy()
    expected.pid[2:10, 2:10] = WHEEL
    expected.pid[4:12, 11:15] = TORSO
    pred = merge_topdown(panoptic, parts, spec)

    return Fixture(
        "grouped-pred",
        spec,
        gt,
        pred,
        facts={"merged_equals_expected": True, "void_person_pixels": 8},
        panoptic=panoptic,
        parts=parts,
        checks={
            "merged_equals_expected": lambda fx: merge_topdown(fx.panoptic, fx.parts, fx.spec) == expected,
            "void_person_pixels": lambda fx: int(
                np.sum((merge_topdown(fx.panoptic, fx.parts, fx.spec).sid == PERSON) & (fx.pred.pid == 0))
            ),
        },
    )


FIXTURES: dict[str, Callable[[DatasetSpec], Fixture]] = {
    "boundary-confusion": _boundary_confusion,
    "exact-half-iou": _exact_half_iou,
    "void-heavy": _void_heavy,
    "partless-gt": _partless_gt,
    "grouped-pred": _grouped_pred,
}


def build_fixture(name: str) -> Fixture:
    try:
        builder = FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return builder(builtin_spec("cpp"))
