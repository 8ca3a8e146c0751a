"""PartPQ, PQ, mIOU, mPA and SIG.

Per-image work produces :class:`ClassAccumulator` tallies (and confusion
counts) that add up across images; :func:`finalize` turns the dataset totals
into scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from partpq.codec import LabelMap
from partpq.merging import PartPrediction
from partpq.report import Aggregate, ClassScore, EvalReport, MiouReport, SigReport
from partpq.segments import (
    Segment,
    Segmentation,
    raw_match,
    resolve_match,
    segment_map,
)
from partpq.spec import VOID, DatasetSpec

PART_UNIVERSES = ("present", "all")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class EvalOptions:
    part_universe: str = "present"
    require_parts: bool = True
    with_pq: bool = True
    with_miou: bool = False

    def __post_init__(self) -> None:
        if self.part_universe not in PART_UNIVERSES:
            raise ValueError(f"part_universe must be one of {PART_UNIVERSES}")


@dataclass(frozen=True)
class ClassAccumulator:
    sid: int
    tp: int = 0
    fp: int = 0
    fn: int = 0
    sum_iou: float = 0.0

    def __add__(self, other: "ClassAccumulator") -> "ClassAccumulator":
        return combine(self, other)


def combine(a: ClassAccumulator, b: ClassAccumulator) -> ClassAccumulator:
    if a.sid != b.sid:
        raise ValueError(f"cannot combine accumulators of sid {a.sid} and {b.sid}")
    return ClassAccumulator(a.sid, a.tp + b.tp, a.fp + b.fp, a.fn + b.fn, a.sum_iou + b.sum_iou)


Accumulators = dict[int, ClassAccumulator]


def combine_all(a: Accumulators, b: Accumulators) -> Accumulators:
    out = dict(a)
    for sid, acc in b.items():
        out[sid] = combine(out[sid], acc) if sid in out else acc
    return dict(sorted(out.items()))


@dataclass
class ImageResult:
    """Everything one image contributes to a dataset evaluation."""

    partpq: Accumulators
    pq: Accumulators | None = None
    confusion: np.ndarray | None = None

    def __add__(self, other: "ImageResult") -> "ImageResult":
        return ImageResult(
            combine_all(self.partpq, other.partpq),
            None if self.pq is None or other.pq is None else combine_all(self.pq, other.pq),
            None if self.confusion is None or other.confusion is None else self.confusion + other.confusion,
        )


def fold(results: list[ImageResult]) -> ImageResult:
    """Pairwise reduction in list order; the tree shape depends only on len()."""
    if not results:
        raise ValueError("nothing to fold")
    if len(results) == 1:
        return results[0]
    mid = len(results) // 2
    return fold(results[:mid]) + fold(results[mid:])


def _check_shapes(*maps) -> None:
    shapes = {tuple(np.shape(m.sid if isinstance(m, LabelMap) else m)) for m in maps}
    if len(shapes) != 1:
        raise ShapeError(f"dimension mismatch: {sorted(shapes)}")


# ---------------------------------------------------------------------------
# part IOU


def _part_ious(
    pairs: list[tuple[Segment, Segment]],
    gseg: Segmentation,
    pseg: Segmentation,
    spec: DatasetSpec,
    universe: str = "present",
) -> list[float]:
    """Mean part IOU for each matched (gt, pred) pair, from three bincounts."""
    if not pairs:
        return []
    K = len(pairs)
    P = spec.max_pid + 1
    ignore = gseg.ignore
    # trailing -1 lets label -1 index "no pair"
    pair_of_g = np.full(len(gseg.segments) + 1, -1, np.int64)
    pair_of_p = np.full(len(pseg.segments) + 1, -1, np.int64)
    for k, (g, p) in enumerate(pairs):
        pair_of_g[g.index] = k
        pair_of_p[p.index] = k
    kg = pair_of_g[gseg.labels]
    kp = pair_of_p[pseg.labels]
    kp[ignore] = -1
    gpid = gseg.pid.astype(np.int64)
    ppid = pseg.pid.astype(np.int64)

    mg = kg >= 0
    G = np.bincount(kg[mg] * P + gpid[mg], minlength=K * P).reshape(K, P)
    mp = kp >= 0
    Q = np.bincount(kp[mp] * P + ppid[mp], minlength=K * P).reshape(K, P)
    both = mg & (kg == kp)
    H = np.bincount(
        kg[both] * (P * P) + gpid[both] * P + ppid[both], minlength=K * P * P
    ).reshape(K, P, P)

    out = []
    for k, (g, _) in enumerate(pairs):
        h = H[k]
        g_only = G[k] - h.sum(axis=1)  # gt part a, pred background
        p_only = Q[k] - h.sum(axis=0)  # gt background, pred part b
        # gt row 0 (unlabelled gt part) is ignored everywhere
        bg_union = int(p_only.sum() + g_only[1:].sum())
        inter = np.diagonal(h)
        gt_c = G[k]
        pred_c = h[1:].sum(axis=0) + p_only
        union = gt_c + pred_c - inter
        ious: list[float] = []
        if bg_union > 0:
            ious.append(0.0)
        if universe == "all":
            cands = sorted(spec[g.sid].pids)
        else:
            cands = [c for c in range(1, P) if union[c] > 0]
        for c in cands:
            u = int(union[c])
            ious.append(int(inter[c]) / u if u else 0.0)
        out.append(sum(ious) / len(ious) if ious else 0.0)
    return out


def part_iou(
    g: Segment,
    p: Segment,
    gt_map: LabelMap,
    pred_map: LabelMap,
    spec: DatasetSpec,
    universe: str = "present",
) -> float:
    """Multi-class mean part IOU of a matched gt/pred pair.

    Over the union of both masks, pixels outside a segment count as
    background. Unlabelled gt part pixels are skipped; unlabelled predicted
    part pixels count as misses for the gt class and as no class's false
    positive. Predicted pixels on gt ignore regions are dropped first.
    """
    gseg = segment_map(gt_map, spec)
    pseg = segment_map(pred_map, spec)
    gi = _find(gseg, g)
    pi = _find(pseg, p)
    return _part_ious([(gi, pi)], gseg, pseg, spec, universe)[0]


def _find(seg: Segmentation, s: Segment) -> Segment:
    for cand in seg.segments:
        if cand.key == s.key:
            return cand
    raise KeyError(f"segment {s.key} not present in map")


# ---------------------------------------------------------------------------
# per-image evaluation


def evaluate_image(
    gt_map: LabelMap, pred_map: LabelMap, spec: DatasetSpec, options: EvalOptions = EvalOptions()
) -> ImageResult:
    _check_shapes(gt_map, pred_map)
    gseg = segment_map(gt_map, spec)
    pseg = segment_map(pred_map, spec)
    raw = raw_match(gseg.segments, pseg.segments, gseg.ignore)

    m = resolve_match(raw, spec, options.require_parts)
    parted = [(g, p) for g, p, _ in m.tp if spec[g.sid].has_parts]
    pious = iter(_part_ious(parted, gseg, pseg, spec, options.part_universe))
    iou_p = [next(pious) if spec[g.sid].has_parts else iou for g, _, iou in m.tp]
    partpq = _tally(spec, m, iou_p)

    pq = None
    if options.with_pq:
        m_pq = resolve_match(raw, spec, require_parts=False)
        pq = _tally(spec, m_pq, [iou for _, _, iou in m_pq.tp])

    conf = None
    if options.with_miou:
        conf = confusion(gt_map.sid, pred_map.sid, spec.evaluated)
    return ImageResult(partpq, pq, conf)


def _tally(spec: DatasetSpec, m, iou_p: list[float]) -> Accumulators:
    counts = {sid: [0, 0, 0, 0.0] for sid in spec.evaluated}
    for (g, _, _), v in zip(m.tp, iou_p):
        c = counts[g.sid]
        c[0] += 1
        c[3] += v
    for p in m.fp:
        counts[p.sid][1] += 1
    for g in m.fn:
        counts[g.sid][2] += 1
    return {sid: ClassAccumulator(sid, c[0], c[1], c[2], c[3]) for sid, c in counts.items()}


def evaluate_pair(
    gt_map: LabelMap, pred_map: LabelMap, spec: DatasetSpec, options: EvalOptions = EvalOptions()
) -> Accumulators:
    """Per-class PartPQ tallies for one image."""
    return evaluate_image(gt_map, pred_map, spec, replace(options, with_pq=False, with_miou=False)).partpq


def evaluate_pq(gt_map: LabelMap, pred_map: LabelMap, spec: DatasetSpec) -> EvalReport:
    """Plain PQ: instance IOU for every class and no part-label requirement."""
    res = evaluate_image(gt_map, pred_map, spec, EvalOptions(with_pq=True))
    return finalize(res.pq, spec, metric="PQ")


# ---------------------------------------------------------------------------
# finalisation


def _score(acc: ClassAccumulator, spec: DatasetSpec) -> ClassScore:
    denom = acc.tp + 0.5 * acc.fp + 0.5 * acc.fn
    defined = (acc.tp + acc.fp + acc.fn) > 0
    c = spec[acc.sid]
    return ClassScore(
        sid=acc.sid,
        name=c.name,
        pq=acc.sum_iou / denom if defined else 0.0,
        sq=acc.sum_iou / acc.tp if acc.tp else 0.0,
        rq=acc.tp / denom if defined else 0.0,
        tp=acc.tp,
        fp=acc.fp,
        fn=acc.fn,
        sum_iou=acc.sum_iou,
        defined=defined,
    )


SUBSETS = ("All", "P", "NP", "Things", "Stuff")


def _subset(spec: DatasetSpec, name: str) -> set[int]:
    return {
        "All": set(spec.evaluated),
        "P": set(spec.with_parts),
        "NP": set(spec.without_parts),
        "Things": set(spec.things),
        "Stuff": set(spec.stuff),
    }[name]


def finalize(
    accs: Accumulators,
    spec: DatasetSpec,
    metric: str = "PartPQ",
    pq: Accumulators | None = None,
    confusion_counts: np.ndarray | None = None,
) -> EvalReport:
    full = {sid: accs.get(sid, ClassAccumulator(sid)) for sid in spec.evaluated}
    classes = [_score(full[sid], spec) for sid in sorted(full)]
    aggregates = {}
    for name in SUBSETS:
        members = [c for c in classes if c.defined and c.sid in _subset(spec, name)]
        n = len(members)
        aggregates[name] = Aggregate(
            pq=sum(c.pq for c in members) / n if n else None,
            sq=sum(c.sq for c in members) / n if n else None,
            rq=sum(c.rq for c in members) / n if n else None,
            n=n,
        )
    report = EvalReport(metric=metric, classes=classes, aggregates=aggregates)
    if pq is not None:
        report.pq = finalize(pq, spec, metric="PQ")
    if confusion_counts is not None:
        per, mean = miou_from_confusion(confusion_counts)
        report.miou = MiouReport(
            per_class={sid: v for sid, v in zip(sorted(spec.evaluated), per)}, mean=mean
        )
    return report


def finalize_image_result(res: ImageResult, spec: DatasetSpec) -> EvalReport:
    return finalize(res.partpq, spec, pq=res.pq, confusion_counts=res.confusion)


# ---------------------------------------------------------------------------
# semantic metrics


def _labels(x) -> np.ndarray:
    return np.asarray(x.sid if isinstance(x, LabelMap) else x)


def confusion(gt_labels, pred_labels, classes, void: int = VOID) -> np.ndarray:
    """``C x (C + 1)`` counts: rows gt class, columns pred class, last column
    for predictions outside ``classes``. Gt pixels outside ``classes`` (void
    included) are skipped."""
    gt = _labels(gt_labels).ravel().astype(np.int64)
    pr = _labels(pred_labels).ravel().astype(np.int64)
    if gt.shape != pr.shape:
        raise ShapeError(f"dimension mismatch: {gt.shape} vs {pr.shape}")
    classes = sorted(classes)
    C = len(classes)
    hi = max(int(gt.max(initial=0)), int(pr.max(initial=0)), max(classes, default=0))
    lut = np.full(hi + 1, C, np.int64)
    lut[classes] = np.arange(C)
    gi = np.where(gt >= 0, lut[np.clip(gt, 0, None)], C)
    pi = np.where(pr >= 0, lut[np.clip(pr, 0, None)], C)
    keep = gi < C
    return np.bincount(gi[keep] * (C + 1) + pi[keep], minlength=C * (C + 1)).reshape(C, C + 1)


def miou_from_confusion(conf: np.ndarray) -> tuple[list[float | None], float | None]:
    C = conf.shape[0]
    inter = np.diagonal(conf[:, :C])
    union = conf.sum(axis=1) + conf[:, :C].sum(axis=0) - inter
    per = [int(i) / int(u) if u else None for i, u in zip(inter, union)]
    vals = [v for v in per if v is not None]
    return per, (sum(vals) / len(vals) if vals else None)


def mpa_from_confusion(conf: np.ndarray) -> tuple[list[float | None], float | None]:
    C = conf.shape[0]
    inter = np.diagonal(conf[:, :C])
    total = conf.sum(axis=1)
    per = [int(i) / int(t) if t else None for i, t in zip(inter, total)]
    vals = [v for v in per if v is not None]
    return per, (sum(vals) / len(vals) if vals else None)


def semantic_miou(gt_labels, pred_labels, label_universe, void: int = VOID) -> tuple[dict[int, float | None], float | None]:
    """Per-class IOU and their mean over classes present in gt or prediction."""
    universe = sorted(set(label_universe) - {void})
    per, mean = miou_from_confusion(confusion(gt_labels, pred_labels, universe, void))
    return dict(zip(universe, per)), mean


def mean_pixel_accuracy(gt_labels, pred_labels, class_subset) -> tuple[dict[int, float | None], float | None]:
    """Per-class recall (correct / gt pixels) and their mean over classes with gt pixels."""
    subset = sorted(class_subset)
    per, mean = mpa_from_confusion(confusion(gt_labels, pred_labels, subset))
    return dict(zip(subset, per)), mean


# ---------------------------------------------------------------------------
# semantic information gain


@dataclass
class SigCounts:
    """Per gt class: pixels B gets wrong, and how many of those A gets right."""

    missed_by_b: dict[int, int] = field(default_factory=dict)
    recovered_by_a: dict[int, int] = field(default_factory=dict)

    def __add__(self, other: "SigCounts") -> "SigCounts":
        keys = sorted(set(self.missed_by_b) | set(other.missed_by_b))
        return SigCounts(
            {k: self.missed_by_b.get(k, 0) + other.missed_by_b.get(k, 0) for k in keys},
            {k: self.recovered_by_a.get(k, 0) + other.recovered_by_a.get(k, 0) for k in keys},
        )


def sig_counts(pred_a, pred_b, gt, spec: DatasetSpec) -> SigCounts:
    a = _labels(pred_a).ravel().astype(np.int64)
    b = _labels(pred_b).ravel().astype(np.int64)
    g = _labels(gt).ravel().astype(np.int64)
    if not (a.shape == b.shape == g.shape):
        raise ShapeError(f"dimension mismatch: {a.shape}, {b.shape}, {g.shape}")
    classes = [s for s in spec.with_parts if spec[s].evaluate]
    n = max(int(g.max(initial=0)), max(classes, default=0)) + 1
    wrong = (b != g) & (g >= 0)
    miss = np.bincount(g[wrong], minlength=n)
    rec = np.bincount(g[wrong & (a == g)], minlength=n)
    return SigCounts({c: int(miss[c]) for c in classes}, {c: int(rec[c]) for c in classes})


def sig_report(counts: SigCounts, spec: DatasetSpec) -> SigReport:
    per: dict[int, float | None] = {}
    for c, x in sorted(counts.missed_by_b.items()):
        per[c] = 100.0 * counts.recovered_by_a[c] / x if x else None
    vals = [v for v in per.values() if v is not None]
    return SigReport(
        per_class=per,
        names={c: spec[c].name for c in per},
        msig=sum(vals) / len(vals) if vals else None,
    )


def sig(pred_a, pred_b, gt, spec: DatasetSpec) -> SigReport:
    """Share (in %) of B's per-class pixel errors that A predicts correctly,
    for every scene class with parts; classes where B makes no error are
    undefined."""
    return sig_report(sig_counts(pred_a, pred_b, gt, spec), spec)


def scene_from_parts(parts: PartPrediction | LabelMap, spec: DatasetSpec) -> np.ndarray:
    """Project an ungrouped part prediction to scene-level labels."""
    if isinstance(parts, LabelMap):
        return parts.sid.copy()
    if parts.grouped:
        raise ValueError(
            "ambiguous scene class: grouped part labels cannot be projected; use an ungrouped part model"
        )
    return parts.sid.copy()
