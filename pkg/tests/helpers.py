"""Test utilities: character-grid maps and a tiny pixel-set oracle.

The oracle works on Python sets of (y, x) coordinates and is used to derive
the frozen expected values of hand-built cases.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from partpq.codec import LabelMap, LabelTriple
from partpq.spec import make_spec

# A small universe with every kind of class:
#   1 road (stuff), 2 sky (stuff), 3 car (things; window, wheel, chassis),
#   4 person (things; head, torso), 5 pole (things, no parts),
#   6 grass (stuff; blade, root), 7 ignored (stuff, not evaluated)
ROAD, SKY, CAR, PERSON, POLE, GRASS, IGNORED = 1, 2, 3, 4, 5, 6, 7
WINDOW, WHEEL, CHASSIS = 1, 2, 3
HEAD, TORSO = 1, 2
BLADE, ROOT = 1, 2

TOY = make_spec(
    "toy",
    [
        (ROAD, "road", "stuff", []),
        (SKY, "sky", "stuff", []),
        (CAR, "car", "things", ["window", "wheel", "chassis"]),
        (PERSON, "person", "things", ["head", "torso"]),
        (POLE, "pole", "things", []),
        (GRASS, "grass", "stuff", ["blade", "root"]),
        (IGNORED, "ignored", "stuff", [], False),
    ],
)


def grid(rows: list[str], legend: dict[str, tuple]) -> LabelMap:
    """Build a map from equal-length strings; '.' is void unless in ``legend``."""
    legend = {".": (0,), **legend}
    return LabelMap.from_triples([[LabelTriple(*legend[ch]) for ch in row] for row in rows])


def pixels(m: LabelMap, sid: int, iid: int | None = None) -> set[tuple[int, int]]:
    out = set()
    for y in range(m.height):
        for x in range(m.width):
            t = m[y, x]
            if t.sid == sid and (iid is None or t.iid == iid):
                out.add((y, x))
    return out


def set_iou(a: set, b: set) -> Fraction:
    return Fraction(len(a & b), len(a | b)) if a | b else Fraction(0)


def set_part_iou(gt: LabelMap, pred: LabelMap, g: set, p: set, pids: list[int]) -> Fraction:
    """Mean part IOU of two segments with a background class outside them.

    Pixels inside ``g`` with gt part-void are excluded from every class.
    """
    region = {xy for xy in g | p if not (xy in g and gt[xy].pid is None)}

    def label(m: LabelMap, seg: set, xy) -> int:
        return (m[xy].pid or 0) if xy in seg else -1

    scores = []
    for c in [-1] + pids:
        gc = {xy for xy in region if label(gt, g, xy) == c}
        pc = {xy for xy in region if label(pred, p, xy) == c}
        if gc | pc:
            scores.append(Fraction(len(gc & pc), len(gc | pc)))
    return sum(scores, Fraction(0)) / len(scores) if scores else Fraction(0)


# 99 classes: odd sids are things, even sids stuff; sid % 4 parts each
WIDE = make_spec(
    "wide",
    [(s, f"c{s}", "things" if s % 2 else "stuff", [f"p{j}" for j in range(1, s % 4 + 1)]) for s in range(1, 100)],
)


def random_triples(rng, spec, n: int):
    """``n`` random valid (sid, iid, pid) rows as int arrays (iid -1 / pid 0 for none).

    Things crowd pixels never carry parts here: the packed form cannot hold them.
    """
    sids = np.array([0] + sorted(spec.by_sid), np.int64)
    things = np.array([False] + [spec[s].is_things for s in sids[1:]])
    nparts = np.array([0] + [len(spec[s].parts) for s in sids[1:]])
    k = rng.integers(0, sids.size, n)
    sid = sids[k]
    has_i = things[k] & (rng.random(n) < 0.8)
    iid = np.where(has_i, rng.integers(0, 1000, n), -1)
    want_p = (nparts[k] > 0) & (rng.random(n) < 0.7) & (has_i | ~things[k])
    # pids are 1..len(parts) in make_spec / builtin specs
    pid = np.where(want_p, 1 + (rng.integers(0, 1 << 30, n) % np.maximum(nparts[k], 1)), 0)
    return sid, iid, pid
