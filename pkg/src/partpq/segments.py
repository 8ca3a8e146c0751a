"""Panoptic segment extraction and TP/FP/FN matching.

A segment is every pixel sharing one (sid, iid) pair, connected or not. Ground
truth pixels that belong to no segment (void, crowd regions of things classes,
classes excluded from evaluation) form the image's ignore set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from partpq.codec import LabelMap
from partpq.spec import DatasetSpec

MATCH_THRESHOLD = 0.5

_IID_SLOTS = 1001  # iid -1..999 packed into one key slot per class


@dataclass(eq=False)
class Segment:
    sid: int
    iid: int | None
    area: int
    has_part_labels: bool
    index: int
    labels: np.ndarray = field(repr=False)

    @property
    def pixels(self) -> np.ndarray:
        """Flat (row-major) pixel indices of this segment."""
        return np.flatnonzero(self.labels == self.index)

    @property
    def key(self) -> tuple[int, int | None]:
        return self.sid, self.iid


@dataclass(eq=False)
class Segmentation:
    segments: list[Segment]
    labels: np.ndarray  # flat segment index per pixel, -1 where none
    pid: np.ndarray  # flat part ids

    @property
    def ignore(self) -> np.ndarray:
        return self.labels < 0


def segment_map(m: LabelMap, spec: DatasetSpec) -> Segmentation:
    sid = m.sid.ravel()
    iid = m.iid.ravel()
    pid = m.pid.ravel()
    evaluated = spec.evaluated
    top = max(int(sid.max()), spec.max_sid)
    # per sid: first key slot of its class (-1 if not evaluated) and kind
    base = np.full(top + 2, -1, np.int32)
    is_things = np.zeros(top + 2, bool)
    for i, s in enumerate(evaluated):
        base[s] = i * _IID_SLOTS
        is_things[s] = spec[s].is_things
    s = np.where(sid < 0, top + 1, sid) if sid.min() < 0 else sid
    b = base[s]
    th = is_things[s]
    key = b + np.where(th, iid + 1, 0).astype(np.int32)
    nkeys = len(evaluated) * _IID_SLOTS
    # crowd things pixels and non-evaluated classes go to the sentinel slot
    key[(b < 0) | (th & (iid < 0))] = nkeys

    area = np.bincount(key, minlength=nkeys + 1)[:nkeys]
    with_parts = np.bincount(key[pid > 0], minlength=nkeys + 1)[:nkeys]
    present = np.flatnonzero(area)
    index_of_key = np.full(nkeys + 1, -1, np.int32)
    index_of_key[present] = np.arange(len(present))
    labels = index_of_key[key]

    segments = []
    for i, k in enumerate(present):
        c, slot = divmod(int(k), _IID_SLOTS)
        segments.append(
            Segment(
                sid=evaluated[c],
                iid=None if slot == 0 else slot - 1,
                area=int(area[k]),
                has_part_labels=bool(with_parts[k]),
                index=i,
                labels=labels,
            )
        )
    return Segmentation(segments, labels, pid)


def extract_segments(m: LabelMap, spec: DatasetSpec) -> list[Segment]:
    return segment_map(m, spec).segments


def ignore_pixels(gt: LabelMap, spec: DatasetSpec) -> np.ndarray:
    """Flat boolean mask of ground truth void, crowd and non-evaluated pixels."""
    return segment_map(gt, spec).ignore


def instance_iou(a: Segment, b: Segment, ignore: np.ndarray | None = None) -> float:
    """Mask IOU of gt segment ``a`` and predicted segment ``b``.

    Pixels of ``b`` inside ``ignore`` are dropped before counting.
    """
    pa = a.pixels
    pb = b.pixels
    if ignore is not None:
        pb = pb[~ignore[pb]]
    inter = np.intersect1d(pa, pb, assume_unique=True).size
    union = pa.size + pb.size - inter
    return inter / union if union else 0.0


@dataclass
class MatchResult:
    tp: list[tuple[Segment, Segment, float]] = field(default_factory=list)
    fp: list[Segment] = field(default_factory=list)
    fn: list[Segment] = field(default_factory=list)
    ignored_gt: list[Segment] = field(default_factory=list)
    # preds dropped from fp: mostly inside ignore pixels, or matched to an ignored gt
    absorbed: list[Segment] = field(default_factory=list)
    ignored_pred: list[Segment] = field(default_factory=list)

    def counts(self) -> dict[int, tuple[int, int, int]]:
        out: dict[int, list[int]] = {}
        for g, _, _ in self.tp:
            out.setdefault(g.sid, [0, 0, 0])[0] += 1
        for p in self.fp:
            out.setdefault(p.sid, [0, 0, 0])[1] += 1
        for g in self.fn:
            out.setdefault(g.sid, [0, 0, 0])[2] += 1
        return {k: tuple(v) for k, v in sorted(out.items())}


def _positions(segs: list[Segment]) -> np.ndarray:
    """Map label-array index -> position in ``segs`` (-1 if absent)."""
    if not segs:
        return np.zeros(0, np.int64)
    pos = np.full(max(s.index for s in segs) + 1, -1, np.int64)
    pos[[s.index for s in segs]] = np.arange(len(segs))
    return pos


def _relabel(labels: np.ndarray, segs: list[Segment]) -> np.ndarray:
    if all(seg.index == i for i, seg in enumerate(segs)) and int(labels.max(initial=-1)) < len(segs):
        return labels  # already positions
    pos = _positions(segs)
    if pos.size == 0:
        return np.full(labels.shape, -1, np.int64)
    inside = (labels >= 0) & (labels < pos.size)
    out = np.full(labels.shape, -1, np.int64)
    out[inside] = pos[labels[inside]]
    return out


def overlap_table(
    gt: list[Segment], pred: list[Segment], ignore: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sparse (gt, pred) overlap counts in one pass over the pixels.

    Returns ``(gi, pj, inter, pred_ignored)``: nonzero overlap pairs as position
    arrays into ``gt``/``pred``, their pixel counts, and per-pred counts of
    pixels inside ``ignore``.
    """
    npred = len(pred)
    if npred == 0:
        e = np.zeros(0, np.int64)
        return e, e, e, e
    pl = _relabel(pred[0].labels, pred)
    pred_ignored = np.bincount(pl[ignore & (pl >= 0)], minlength=npred)
    if not gt:
        e = np.zeros(0, np.int64)
        return e, e, e, pred_ignored
    gl = _relabel(gt[0].labels, gt)
    both = (gl >= 0) & (pl >= 0)
    pair = gl[both].astype(np.int64) * npred + pl[both]
    if len(gt) * npred <= 1 << 24:
        table = np.bincount(pair, minlength=len(gt) * npred)
        nz = np.flatnonzero(table)
        inter = table[nz]
    else:
        nz, inter = np.unique(pair, return_counts=True)
    return nz // npred, nz % npred, inter, pred_ignored


@dataclass(eq=False)
class RawMatch:
    """Threshold matching before any ignore rules are applied."""

    gt: list[Segment]
    pred: list[Segment]
    g_match: np.ndarray  # matched pred position per gt, -1 if none
    p_match: np.ndarray
    ious: np.ndarray  # instance IOU per matched gt
    pred_ignored: np.ndarray  # per pred, pixels inside the ignore set


def raw_match(gt: list[Segment], pred: list[Segment], ignore: np.ndarray) -> RawMatch:
    gi, pj, inter, pred_ignored = overlap_table(gt, pred, ignore)
    g_match = np.full(len(gt), -1, np.int64)
    p_match = np.full(len(pred), -1, np.int64)
    ious = np.zeros(len(gt))
    if gi.size:
        g_area = np.array([s.area for s in gt])
        p_area = np.array([s.area for s in pred])
        g_sid = np.array([s.sid for s in gt])
        p_sid = np.array([s.sid for s in pred])
        union = g_area[gi] + p_area[pj] - pred_ignored[pj] - inter
        iou = inter / union
        hit = (g_sid[gi] == p_sid[pj]) & (iou > MATCH_THRESHOLD)
        for a, b, v in zip(gi[hit], pj[hit], iou[hit]):
            assert g_match[a] < 0 and p_match[b] < 0, "IOU > 0.5 matching must be unique"
            g_match[a] = b
            p_match[b] = a
            ious[a] = v
    return RawMatch(gt, pred, g_match, p_match, ious, pred_ignored)


def resolve_match(raw: RawMatch, spec: DatasetSpec, require_parts: bool) -> MatchResult:
    gt, pred = raw.gt, raw.pred
    res = MatchResult()
    for i, g in enumerate(gt):
        j = raw.g_match[i]
        if require_parts and spec[g.sid].has_parts and not g.has_part_labels:
            res.ignored_gt.append(g)
            if j >= 0:
                res.ignored_pred.append(pred[j])
        elif j >= 0:
            res.tp.append((g, pred[j], float(raw.ious[i])))
        else:
            res.fn.append(g)
    for j, p in enumerate(pred):
        if raw.p_match[j] >= 0:
            continue
        if raw.pred_ignored[j] * 2 > p.area:
            res.absorbed.append(p)
        else:
            res.fp.append(p)
    return res


def match_segments(
    gt: list[Segment],
    pred: list[Segment],
    ignore: np.ndarray,
    spec: DatasetSpec,
    require_parts: bool = False,
) -> MatchResult:
    """Match same-class segments with IOU strictly above 0.5.

    With ``require_parts``, gt segments of part-carrying classes that hold no
    part labels are set aside together with any prediction matched to them.
    Unmatched predictions lying mostly (> 50 %) on ignore pixels are not
    counted as false positives.
    """
    return resolve_match(raw_match(gt, pred, ignore), spec, require_parts)
