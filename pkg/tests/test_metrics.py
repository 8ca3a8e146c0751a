from fractions import Fraction

import numpy as np
import pytest
from helpers import (
    CAR,
    CHASSIS,
    HEAD,
    PERSON,
    ROAD,
    SKY,
    TORSO,
    TOY,
    WHEEL,
    grid,
    pixels,
    set_part_iou,
)

from partpq.codec import LabelMap
from partpq.harness import (
    generate_scene,
    random_recipe,
    reference_evaluate,
    synthetic_spec,
)
from partpq.merging import PartPrediction
from partpq.metrics import (
    ClassAccumulator,
    EvalOptions,
    ImageResult,
    combine,
    evaluate_image,
    evaluate_pair,
    evaluate_pq,
    finalize,
    fold,
    mean_pixel_accuracy,
    part_iou,
    scene_from_parts,
    semantic_miou,
    sig,
)
from partpq.parallel import SyntheticPair, evaluate_items
from partpq.segments import extract_segments
from partpq.spec import builtin_spec, make_spec

CPP = builtin_spec("cpp")
L = {
    "r": (ROAD,),
    "s": (SKY,),
    "w": (CAR, 1, WHEEL),
    "c": (CAR, 1, CHASSIS),
    "v": (CAR, 1),  # car pixel without a part label
    "f": (CAR, 2, CHASSIS),
    "h": (PERSON, 1, HEAD),
    "t": (PERSON, 1, TORSO),
}


def _car(m, iid=1):
    return next(s for s in extract_segments(m, TOY) if s.sid == CAR and s.iid == iid)


# part IOU ---------------------------------------------------------------


def test_part_iou_identical():
    m = grid(["wwcccr"], L)
    assert part_iou(_car(m), _car(m), m, m, TOY) == 1.0


def test_part_iou_hand_case():
    # g = a..h, p = a..f plus x, y
    gt = grid(["wwccccccrr"], L)
    pred = grid(["wcccccrrcc"], L)
    oracle = set_part_iou(gt, pred, pixels(gt, CAR), pixels(pred, CAR), [WHEEL, CHASSIS])
    assert oracle == (Fraction(1, 2) + Fraction(4, 9) + 0) / 3 == Fraction(17, 54)
    assert part_iou(_car(gt), _car(pred), gt, pred, TOY) == pytest.approx(17 / 54, abs=1e-15)



def test_part_iou_all_void_prediction():
    gt = grid(["wwcccr"], L)
    pred = grid(["vvvvvr"], L)
    assert part_iou(_car(gt), _car(pred), gt, pred, TOY) == 0.0


def test_part_iou_asymmetric_with_pred_void():
    gt = grid(["wwcccr"], L)
    pred = grid(["wwcvvr"], L)
    forward = part_iou(_car(gt), _car(pred), gt, pred, TOY)
    backward = part_iou(_car(pred), _car(gt), pred, gt, TOY)
    assert forward == pytest.approx(float((1 + Fraction(1, 3)) / 2))
    # as gt, the unlabelled pixels are ignored instead
    assert backward == 1.0


def test_part_iou_symmetric_without_void():
    gt = grid(["wwcccrr"], L)
    pred = grid(["rwwcccc"], L)
    a = part_iou(_car(gt), _car(pred), gt, pred, TOY)
    b = part_iou(_car(pred), _car(gt), pred, gt, TOY)
    assert a == pytest.approx(b, abs=1e-15)
    assert a == pytest.approx(float(set_part_iou(gt, pred, pixels(gt, CAR), pixels(pred, CAR), [WHEEL, CHASSIS])))


def test_part_iou_all_universe():
    gt = grid(["ccccr"], L)
    pred = grid(["ccccr"], L)
    assert part_iou(_car(gt), _car(pred), gt, pred, TOY, universe="present") == 1.0
    # window and wheel are absent from both and score 0
    assert part_iou(_car(gt), _car(pred), gt, pred, TOY, universe="all") == pytest.approx(1 / 3)


# per-image accumulators -------------------------------------------------


def test_perfect_prediction():
    m = grid(["rrss", "wcht", "ccht"], L)
    accs = evaluate_pair(m, m, TOY)
    for a in accs.values():
        assert a.fp == a.fn == 0
        assert a.sum_iou == a.tp
    assert accs[CAR].tp == accs[PERSON].tp == 1


def test_one_tp_one_fp():
    gt = grid(["wwcccccrrr"], L)
    pred = grid(["wwcccvvrff"], L)  # chassis 3/5, wheel 1 -> 0.8
    acc = evaluate_pair(gt, pred, TOY)[CAR]
    assert (acc.tp, acc.fp, acc.fn) == (1, 1, 0)
    assert acc.sum_iou == pytest.approx(0.8, abs=1e-15)


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        evaluate_pair(LabelMap.empty(2, 2), LabelMap.empty(2, 3), TOY)


def test_combine_laws():
    x = ClassAccumulator(3, 2, 1, 4, 1.25)
    y = ClassAccumulator(3, 1, 0, 2, 0.5)
    assert combine(x, ClassAccumulator(3)) == x
    assert combine(x, y) == combine(y, x) == x + y
    with pytest.raises(ValueError):
        combine(x, ClassAccumulator(4))


def test_fold_equals_dataset_evaluation():
    spec = synthetic_spec(11, 5)
    recipes = [random_recipe(s, spec, size=(16, 48)) for s in range(10)]
    items = [SyntheticPair(f"s{k}", r) for k, r in enumerate(recipes)]
    whole = evaluate_items(items, spec, EvalOptions(), workers=1)
    parts = [evaluate_image(*generate_scene(r, spec), spec) for r in reversed(recipes)]
    manual = parts[0]
    for p in parts[1:]:
        manual = manual + p
    for sid, acc in whole.partpq.items():
        m = manual.partpq[sid]
        assert (acc.tp, acc.fp, acc.fn) == (m.tp, m.fp, m.fn)
        assert acc.sum_iou == pytest.approx(m.sum_iou, abs=1e-12)


def test_fold_tree_shape():
    acc = lambda v: ImageResult({1: ClassAccumulator(1, 1, 0, 0, v)})  # noqa: E731
    with pytest.raises(ValueError):
        fold([])
    assert fold([acc(0.5)]).partpq[1].sum_iou == 0.5
    # ((a + b) + (c + (d + e)))
    vals = [0.1, 0.2, 0.3, 0.4, 0.5]
    expect = (0.1 + 0.2) + (0.3 + (0.4 + 0.5))
    assert fold([acc(v) for v in vals]).partpq[1].sum_iou == expect


# finalisation -----------------------------------------------------------


def test_finalize_arithmetic():
    r = finalize({CAR: ClassAccumulator(CAR, tp=1, fp=1, fn=0, sum_iou=0.8)}, TOY)
    c = r[CAR]
    assert c.pq == pytest.approx(0.8 / 1.5, abs=1e-15)
    assert c.sq == pytest.approx(0.8, abs=1e-15)
    assert c.rq == pytest.approx(2 / 3, abs=1e-15)
    assert r.aggregates["All"].n == 1
    assert not r[ROAD].defined


def test_finalize_person_row():
    # 381 tp with 238 errors gives RQ 0.762; SQ 0.578
    r = finalize({24: ClassAccumulator(24, tp=381, fp=120, fn=118, sum_iou=0.578 * 381)}, CPP)
    c = r[24]
    assert c.rq == pytest.approx(0.762, abs=1e-12)
    assert c.sq == pytest.approx(0.578, abs=1e-12)
    assert c.pq == pytest.approx(0.440436, abs=1e-9)


def test_pq_road_row():
    r = finalize({7: ClassAccumulator(7, tp=999, fp=1, fn=1, sum_iou=0.984 * 999)}, CPP, metric="PQ")
    assert r[7].rq == pytest.approx(0.999, abs=1e-12)
    assert round(100 * r[7].pq, 1) == 98.3


def test_undefined_classes_excluded():
    accs = {ROAD: ClassAccumulator(ROAD, 1, 0, 0, 1.0), SKY: ClassAccumulator(SKY)}
    r = finalize(accs, TOY)
    assert not r[SKY].defined
    assert r.aggregates["All"].pq == 1.0 and r.aggregates["All"].n == 1
    assert r.aggregates["P"].pq is None


def test_pq_equals_partpq_without_parts():
    spec = make_spec("flat", [(1, "a", "stuff", []), (2, "b", "things", []), (3, "c", "things", [])])
    for seed in range(20):
        gt, pred = generate_scene(random_recipe(seed, spec), spec)
        a = finalize(evaluate_pair(gt, pred, spec), spec)
        b = evaluate_pq(gt, pred, spec)
        assert [(c.tp, c.fp, c.fn, c.pq) for c in a.classes] == [(c.tp, c.fp, c.fn, c.pq) for c in b.classes]


def test_evaluate_pair_matches_reference_32():
    spec = synthetic_spec(4, 6)
    gt, pred = generate_scene(random_recipe(4, spec, width=32, height=32), spec)
    fast = finalize(evaluate_pair(gt, pred, spec), spec)
    ref = reference_evaluate(gt, pred, spec)
    for a, b in zip(fast.classes, ref.classes):
        assert (a.tp, a.fp, a.fn) == (b.tp, b.fp, b.fn)
        assert a.pq == pytest.approx(b.pq, abs=1e-9)


# semantic metrics -------------------------------------------------------


def test_miou_identical_and_disjoint():
    a = np.array([[1, 1, 2, 2]])
    assert semantic_miou(a, a, [1, 2])[1] == 1.0
    assert semantic_miou(np.array([[1, 1]]), np.array([[2, 2]]), [1, 2])[1] == 0.0


def test_miou_hand_case():
    per, mean = semantic_miou(np.array([[1, 1, 2, 2]]), np.array([[1, 2, 2, 2]]), [1, 2])
    assert per == {1: 0.5, 2: pytest.approx(2 / 3)}
    assert mean == pytest.approx(7 / 12)


def test_miou_skips_void_and_absent():
    per, mean = semantic_miou(np.array([[0, 1, 1]]), np.array([[2, 1, 1]]), [0, 1, 2, 3])
    assert per[1] == 1.0 and per[3] is None and per[2] is None
    assert mean == 1.0


def test_mpa():
    gt = np.array([1] * 10 + [2] * 5)
    pred = np.array([1] * 7 + [2] * 3 + [2] * 5)
    per, mean = mean_pixel_accuracy(gt, pred, [1, 2, 3])
    assert per[1] == pytest.approx(0.7) and per[2] == 1.0 and per[3] is None
    assert mean == pytest.approx(0.85)


def test_sig_hand_case():
    gt = np.full(20, CAR)
    b = gt.copy()
    b[:10] = ROAD  # B wrong on 10 car pixels
    a = b.copy()
    a[:4] = CAR  # A recovers 4
    r = sig(a, b, gt, TOY)
    assert r.per_class[CAR] == 40.0
    assert r.msig == 40.0


def test_sig_same_method_is_zero():
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 7, (20, 20))
    p = rng.integers(0, 7, (20, 20))
    r = sig(p, p, gt, TOY)
    assert all(v == 0.0 for v in r.per_class.values() if v is not None)


def test_sig_undefined_when_b_perfect():
    gt = np.array([CAR, CAR, PERSON])
    r = sig(gt, gt, gt, TOY)
    assert all(v is None for v in r.per_class.values())
    assert r.msig is None


def test_scene_from_parts():
    parts = PartPrediction(sid=np.array([[PERSON, CAR]]), pid=np.array([[HEAD, WHEEL]]))
    assert scene_from_parts(parts, TOY).tolist() == [[PERSON, CAR]]
    grouped = PartPrediction(gid=np.array([[2]]), grouping=CPP.grouping("grouped"))
    with pytest.raises(ValueError, match="ambiguous scene class"):
        scene_from_parts(grouped, CPP)
