"""Invariants checked over generated inputs."""

import numpy as np
from helpers import WIDE
from hypothesis import given, settings
from hypothesis import strategies as st

from partpq.codec import LabelMap, LabelTriple, decode_uid, encode_uid, validate_map
from partpq.harness import (
    generate_scene,
    random_recipe,
    reference_evaluate,
    synthetic_spec,
)
from partpq.io import report_json
from partpq.merging import PartPrediction, merge_conservative, merge_topdown
from partpq.metrics import (
    EvalOptions,
    evaluate_image,
    evaluate_pair,
    finalize,
    finalize_image_result,
    sig,
)
from partpq.parallel import SyntheticPair, evaluate_items

SETTINGS = settings(max_examples=60, deadline=None)


@st.composite
def triples(draw):
    sid = draw(st.integers(0, 99))
    if sid == 0:
        return LabelTriple.void()
    cls = WIDE[sid]
    iid = draw(st.none() | st.integers(0, 999)) if cls.is_things else None
    can_part = cls.has_parts and (iid is not None or not cls.is_things)
    pid = draw(st.none() | st.sampled_from(sorted(cls.pids))) if can_part else None
    return LabelTriple(sid, iid, pid)


@st.composite
def scenes(draw, max_side=40):
    seed = draw(st.integers(0, 2**32 - 1))
    spec = synthetic_spec(seed, draw(st.integers(2, 6)), draw(st.integers(0, 3)))
    recipe = random_recipe(seed, spec, size=(8, max_side))
    gt, pred = generate_scene(recipe, spec)
    return spec, gt, pred


@SETTINGS
@given(triples())
def test_uid_round_trip(t):
    assert decode_uid(encode_uid(t), WIDE) == t


@SETTINGS
@given(scenes(), st.sampled_from(["present", "all"]))
def test_fast_path_equals_oracle(scene, universe):
    spec, gt, pred = scene
    opts = EvalOptions(part_universe=universe)
    fast = finalize(evaluate_pair(gt, pred, spec, opts), spec)
    ref = reference_evaluate(gt, pred, spec, opts)
    for a, b in zip(fast.classes, ref.classes):
        assert (a.tp, a.fp, a.fn) == (b.tp, b.fp, b.fn)
        assert abs(a.pq - b.pq) < 1e-9 and abs(a.sq - b.sq) < 1e-9 and abs(a.rq - b.rq) < 1e-9


@SETTINGS
@given(scenes())
def test_scores_bounded_and_decompose(scene):
    spec, gt, pred = scene
    rep = finalize_image_result(evaluate_image(gt, pred, spec, EvalOptions(with_miou=True)), spec)
    for r in (rep, rep.pq):
        for c in r.classes:
            assert 0.0 <= c.pq <= 1.0 and 0.0 <= c.sq <= 1.0 and 0.0 <= c.rq <= 1.0
            if c.tp:
                assert abs(c.pq - c.sq * c.rq) < 1e-12
    assert all(v is None or 0.0 <= v <= 1.0 for v in rep.miou.per_class.values())


@SETTINGS
@given(scenes())
def test_no_parts_classes_equal_pq(scene):
    spec, gt, pred = scene
    res = evaluate_image(gt, pred, spec)
    for sid in spec.without_parts:
        a, b = res.partpq[sid], res.pq[sid]
        assert (a.tp, a.fp, a.fn, a.sum_iou) == (b.tp, b.fp, b.fn, b.sum_iou)


@SETTINGS
@given(scenes())
def test_sig_bounds(scene):
    spec, gt, pred = scene
    flipped = np.where(np.random.default_rng(0).random(gt.shape) < 0.3, 0, gt.sid)
    r = sig(pred, flipped, gt, spec)
    assert all(v is None or 0.0 <= v <= 100.0 for v in r.per_class.values())
    assert all(v in (None, 0.0) for v in sig(pred, pred, gt, spec).per_class.values())


@SETTINGS
@given(scenes(max_side=24), st.integers(0, 2**32 - 1))
def test_merge_dominance(scene, seed):
    spec, gt, pred = scene
    rng = np.random.default_rng(seed)
    pan = LabelMap(pred.sid, pred.iid, np.zeros(pred.shape))
    # part model output: gt classes, with 30 % of pixels switched to a random class with parts
    nparts = np.zeros(spec.max_sid + 1, np.int64)
    for c in spec.scene_classes:
        nparts[c.sid] = len(c.parts)
    noise = rng.choice([0] + spec.with_parts, gt.shape)
    psid = np.where(rng.random(gt.shape) < 0.3, noise, gt.sid)
    ppid = np.where(nparts[psid] > 0, 1 + rng.integers(0, 1 << 20, gt.shape) % np.maximum(nparts[psid], 1), 0)
    parts = PartPrediction(sid=psid, pid=ppid)
    td = merge_topdown(pan, parts, spec)
    cs = merge_conservative(pan, parts, spec)
    assert validate_map(td, spec) == [] and validate_map(cs, spec) == []
    assert np.all((cs.sid == 0) | (td.sid != 0))
    assert np.array_equal(td.sid, pan.sid) and np.array_equal(td.iid, pan.iid)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**16), st.permutations(range(8)))
def test_report_independent_of_item_order(seed, order):
    spec = synthetic_spec(seed, 4)
    items = [SyntheticPair(f"img{k}", random_recipe(seed + k, spec, size=(12, 24))) for k in range(8)]
    a = finalize_image_result(evaluate_items(items, spec, workers=1), spec)
    b = finalize_image_result(evaluate_items([items[i] for i in order], spec, workers=1), spec)
    assert report_json(a) == report_json(b)
