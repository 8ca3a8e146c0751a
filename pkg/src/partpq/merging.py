"""Merge panoptic and part predictions into part-aware panoptic label maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from partpq.codec import NO_INSTANCE, LabelMap, part_table
from partpq.spec import VOID, DatasetSpec, PartGrouping, SpecError

STRATEGIES = ("topdown", "conservative")


class MergeError(ValueError):
    pass


@dataclass(eq=False)
class PartPrediction:
    """Per-pixel output of a part segmentation model.

    Ungrouped mode carries ``sid``/``pid`` planes (sid 0 is background).
    Grouped mode carries a ``gid`` plane (0 is background) and the grouping
    that defines it.
    """

    sid: np.ndarray | None = None
    pid: np.ndarray | None = None
    gid: np.ndarray | None = None
    grouping: PartGrouping | None = None

    def __post_init__(self) -> None:
        if self.gid is not None:
            if self.sid is not None or self.pid is not None:
                raise MergeError("a part prediction is either grouped or ungrouped, not both")
            if self.grouping is None:
                raise MergeError("grouped part prediction must name its grouping")
            self.gid = np.asarray(self.gid, np.int32)
        else:
            if self.sid is None or self.pid is None:
                raise MergeError("ungrouped part prediction needs sid and pid planes")
            self.sid = np.asarray(self.sid, np.int32)
            self.pid = np.asarray(self.pid, np.int32)
            if self.sid.shape != self.pid.shape:
                raise MergeError("sid and pid planes differ in shape")

    @classmethod
    def from_label_map(cls, m: LabelMap) -> "PartPrediction":
        return cls(sid=m.sid.copy(), pid=m.pid.copy())

    @property
    def grouped(self) -> bool:
        return self.gid is not None

    @property
    def shape(self) -> tuple[int, int]:
        return self.gid.shape if self.grouped else self.sid.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PartPrediction):
            return NotImplemented
        if self.grouped != other.grouped:
            return False
        if self.grouped:
            return self.grouping.name == other.grouping.name and np.array_equal(self.gid, other.gid)
        return np.array_equal(self.sid, other.sid) and np.array_equal(self.pid, other.pid)


def _specialized_pid(panoptic: LabelMap, parts: PartPrediction, spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per pixel: the part id compatible with the panoptic class, and whether
    the part prediction contradicts that class.

    Background part predictions are neither compatible nor contradicting.
    """
    sid = panoptic.sid
    if parts.grouped:
        g = parts.grouping
        ng = g.num_groups
        # lut[gid, sid] -> pid (0 none), conflict when gid has no member for sid
        lut = np.zeros((ng + 1, spec.max_sid + 1), np.int32)
        has = np.zeros((ng + 1, spec.max_sid + 1), bool)
        for gid, members in g.members.items():
            for s in {m[0] for m in members}:
                try:
                    pid = g.specialize(gid, s)
                except SpecError as e:
                    raise MergeError(str(e)) from e
                lut[gid, s] = pid
                has[gid, s] = True
        gid = parts.gid
        if gid.min() < 0 or gid.max() > ng:
            raise MergeError(f"gid outside 0..{ng} for grouping {g.name!r}")
        s = np.clip(sid, 0, spec.max_sid)
        pid = lut[gid, s]
        conflict = (gid > 0) & ~has[gid, s]
        return pid, conflict
    same = parts.sid == sid
    pid = np.where(same, parts.pid, 0)
    table = part_table(spec, max_pid=int(max(parts.pid.max(), 0)))
    ps = np.clip(parts.sid, 0, table.shape[0] - 1)
    pp = np.clip(parts.pid, 0, table.shape[1] - 1)
    pid = np.where(same & table[ps, pp], pid, 0)
    conflict = (parts.sid != VOID) & ~same
    return pid, conflict


def _merge(panoptic: LabelMap, parts: PartPrediction, spec: DatasetSpec, conservative: bool) -> LabelMap:
    if panoptic.shape != parts.shape:
        raise MergeError(f"dimension mismatch: panoptic {panoptic.shape} vs parts {parts.shape}")
    if np.any(panoptic.pid != 0):
        raise MergeError("panoptic input must not carry part labels")
    parted = np.zeros(max(spec.max_sid, int(panoptic.sid.max())) + 1, bool)
    parted[spec.with_parts] = True
    in_parts_class = parted[np.clip(panoptic.sid, 0, None)] & (panoptic.sid > 0)

    pid, conflict = _specialized_pid(panoptic, parts, spec)
    out = panoptic.copy()
    out.pid = np.where(in_parts_class, pid, 0).astype(np.int32)
    if conservative:
        drop = in_parts_class & conflict
        out.sid[drop] = VOID
        out.iid[drop] = NO_INSTANCE
        out.pid[drop] = 0
    return out


def merge_topdown(panoptic: LabelMap, parts: PartPrediction, spec: DatasetSpec) -> LabelMap:
    """Keep the panoptic scene label; part predictions that do not belong to
    the pixel's class become part-void."""
    return _merge(panoptic, parts, spec, conservative=False)


def merge_conservative(panoptic: LabelMap, parts: PartPrediction, spec: DatasetSpec) -> LabelMap:
    """Like :func:`merge_topdown`, but pixels where the part prediction
    contradicts the panoptic class leave their segment and become fully void."""
    return _merge(panoptic, parts, spec, conservative=True)


def merge(panoptic: LabelMap, parts: PartPrediction, spec: DatasetSpec, strategy: str = "topdown") -> LabelMap:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown merge strategy {strategy!r}; choose from {STRATEGIES}")
    return _merge(panoptic, parts, spec, conservative=strategy == "conservative")


def remap_parts(parts: PartPrediction | LabelMap, grouping: PartGrouping, direction: str = "group") -> PartPrediction:
    """Replace (sid, pid) labels by group ids, or check a grouping is the identity.

    Pixels without a part label (background, part-void, classes without
    parts) map to gid 0.
    """
    if isinstance(parts, LabelMap):
        parts = PartPrediction.from_label_map(parts)
    if parts.grouped:
        raise MergeError("remap_parts expects an ungrouped part prediction")
    if direction == "identity-check":
        if not grouping.is_identity:
            raise MergeError(f"grouping {grouping.name!r} is not the identity")
        return parts
    if direction != "group":
        raise ValueError(f"unknown direction {direction!r}")
    ms = max(max((s for s, _ in grouping.map), default=0), int(parts.sid.max()))
    mp = max(max((p for _, p in grouping.map), default=0), int(parts.pid.max()))
    lut = np.full((ms + 1, mp + 1), -1, np.int32)
    lut[:, 0] = 0
    for (s, p), g in grouping.map.items():
        lut[s, p] = g
    sid = np.clip(parts.sid, 0, ms)
    pid = np.clip(parts.pid, 0, mp)
    has = parts.pid > 0
    gid = np.where(has, lut[sid, pid], 0)
    if np.any(gid < 0):
        i = int(np.flatnonzero(gid.ravel() < 0)[0])
        raise MergeError(
            f"pair ({int(parts.sid.flat[i])}, {int(parts.pid.flat[i])}) is outside grouping {grouping.name!r}"
        )
    return PartPrediction(gid=gid, grouping=grouping)
