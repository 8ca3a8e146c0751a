"""Seeded synthetic scenes and controlled prediction perturbations.

All randomness comes from ``numpy.random.Generator(numpy.random.Philox(key=seed))``,
a counter-based generator, consumed in a fixed order:

1. ground truth: per roster entry, per shape: shape kind, box, crowd flag,
   partless flag, band count, band pids, band coverage draws;
2. prediction: split draws, merge draws, class-flip draws, part-flip draws,
   void-injection draws, in that order.

The same recipe therefore always yields bit-identical maps.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from partpq.codec import MAX_IID, NO_INSTANCE, LabelMap
from partpq.spec import VOID, DatasetSpec, make_spec

RATE_FIELDS = ("part_coverage", "partless_rate", "crowd_rate", "class_flip", "part_flip", "split_rate", "merge_rate", "void_rate")


@dataclass(frozen=True)
class SceneRecipe:
    seed: int
    width: int
    height: int
    roster: tuple[tuple[int, int], ...]  # (sid, number of shapes), painted in order
    part_coverage: float = 1.0
    partless_rate: float = 0.0
    crowd_rate: float = 0.0
    erosion: int = 0
    class_flip: float = 0.0
    part_flip: float = 0.0
    split_rate: float = 0.0
    merge_rate: float = 0.0
    void_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.width < 4 or self.height < 4:
            raise ValueError("recipe dimensions must be at least 4x4")
        for name in RATE_FIELDS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.erosion < 0:
            raise ValueError("erosion radius must be >= 0")
        object.__setattr__(self, "roster", tuple((int(s), int(n)) for s, n in self.roster))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roster"] = [list(r) for r in self.roster]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneRecipe":
        names = {f.name for f in fields(cls)}
        return cls(**{k: (tuple(map(tuple, v)) if k == "roster" else v) for k, v in d.items() if k in names})

    @property
    def perturbed(self) -> bool:
        return bool(self.erosion) or any(
            getattr(self, n) for n in ("class_flip", "part_flip", "split_rate", "merge_rate", "void_rate")
        )


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def _shape_mask(rng: np.random.Generator, h: int, w: int, big: bool) -> tuple[tuple[slice, slice], np.ndarray]:
    lo = 0.4 if big else 0.15
    hi = 1.0 if big else 0.5
    bh = max(2, int(h * rng.uniform(lo, hi)))
    bw = max(2, int(w * rng.uniform(lo, hi)))
    y0 = int(rng.integers(0, h - bh + 1))
    x0 = int(rng.integers(0, w - bw + 1))
    ellipse = rng.random() < 0.5
    box = (slice(y0, y0 + bh), slice(x0, x0 + bw))
    if not ellipse:
        return box, np.ones((bh, bw), bool)
    yy = (np.arange(bh) + 0.5 - bh / 2) / (bh / 2)
    xx = (np.arange(bw) + 0.5 - bw / 2) / (bw / 2)
    return box, (yy[:, None] ** 2 + xx[None, :] ** 2) <= 1.0


def _paint_gt(recipe: SceneRecipe, spec: DatasetSpec, rng: np.random.Generator) -> LabelMap:
    h, w = recipe.height, recipe.width
    m = LabelMap.empty(h, w)
    next_iid = 0
    for sid, count in recipe.roster:
        cls = spec[sid]
        pids = sorted(cls.pids)
        for _ in range(count):
            box, mask = _shape_mask(rng, h, w, big=not cls.is_things)
            crowd = rng.random() < recipe.crowd_rate
            partless = rng.random() < recipe.partless_rate
            nbands = int(rng.integers(1, 5))
            band_pids = rng.integers(0, max(len(pids), 1), size=nbands)
            covered = rng.random(nbands) < recipe.part_coverage
            if cls.is_things and not crowd:
                if next_iid > MAX_IID:
                    continue
                iid = next_iid
                next_iid += 1
            else:
                iid = NO_INSTANCE
            pid_block = np.zeros(mask.shape, np.int32)
            if pids and not partless:
                edges = np.linspace(0, mask.shape[0], nbands + 1).astype(int)
                for b in range(nbands):
                    if covered[b]:
                        pid_block[edges[b] : edges[b + 1]] = pids[band_pids[b]]
            m.sid[box][mask] = sid
            m.iid[box][mask] = iid
            m.pid[box][mask] = pid_block[mask]
    return m


def _keys(m: LabelMap) -> list[tuple[int, int]]:
    """Distinct (sid, iid) pairs in sorted order."""
    slots = MAX_IID + 2
    counts = np.bincount((m.sid.astype(np.int64) * slots + m.iid + 1).ravel())
    return [(int(k // slots), int(k % slots) - 1) for k in np.flatnonzero(counts)]


def _instances(m: LabelMap) -> list[tuple[int, int]]:
    return [(s, i) for s, i in _keys(m) if i >= 0]


def _perturb(gt: LabelMap, recipe: SceneRecipe, spec: DatasetSpec, rng: np.random.Generator) -> LabelMap:
    p = gt.copy()
    insts = _instances(gt)
    next_iid = max((i for _, i in insts), default=-1) + 1

    split = rng.random(len(insts)) < recipe.split_rate
    for (sid, iid), do in zip(insts, split):
        if not do or next_iid > MAX_IID:
            continue
        mask = (p.sid == sid) & (p.iid == iid)
        cols = np.flatnonzero(mask.any(axis=0))
        if cols.size < 2:
            continue
        cut = (cols[0] + cols[-1] + 1) // 2
        right = mask.copy()
        right[:, :cut] = False
        p.iid[right] = next_iid
        next_iid += 1

    merge = rng.random(len(insts)) < recipe.merge_rate
    for (sid, iid), do in zip(insts, merge):
        if not do:
            continue
        partners = [j for s, j in insts if s == sid and j != iid]
        if partners:
            p.iid[(p.sid == sid) & (p.iid == iid)] = partners[0]

    keys = [(s, i) for s, i in _keys(p) if s != VOID]
    flips = rng.random(len(keys)) < recipe.class_flip
    choices = rng.random(len(keys))
    new_sid = p.sid.copy()
    new_iid = p.iid.copy()
    new_pid = p.pid.copy()
    for (sid, iid), do, u in zip(keys, flips, choices):
        if not do:
            continue
        src = spec[sid]
        same_kind = [c.sid for c in spec.scene_classes if c.kind == src.kind and c.sid != sid]
        if not same_kind:
            continue
        tgt = spec[same_kind[int(u * len(same_kind))]]
        mask = (p.sid == sid) & (p.iid == iid)
        new_sid[mask] = tgt.sid
        old = p.pid[mask]
        if tgt.has_parts:
            tp = np.array(sorted(tgt.pids), np.int32)
            new_pid[mask] = np.where(old > 0, tp[(np.maximum(old, 1) - 1) % tp.size], 0)
        else:
            new_pid[mask] = 0
        if not tgt.is_things:
            new_iid[mask] = NO_INSTANCE
    p = LabelMap(new_sid, new_iid, new_pid)

    flip = rng.random(p.shape) < recipe.part_flip
    pick = rng.random(p.shape)
    for c in spec.scene_classes:
        if not c.has_parts:
            continue
        sel = flip & (p.sid == c.sid) & (p.pid > 0)
        if not np.any(sel):
            continue
        # one extra slot maps to part-void
        opts = np.array(sorted(c.pids) + [0], np.int32)
        p.pid[sel] = opts[(pick[sel] * opts.size).astype(int)]

    if recipe.erosion:
        key = p.sid.astype(np.int64) * 2048 + (p.iid.astype(np.int64) + 1)
        edge = np.zeros(p.shape, bool)
        for r in range(1, recipe.erosion + 1):
            edge[r:, :] |= key[r:, :] != key[:-r, :]
            edge[:-r, :] |= key[:-r, :] != key[r:, :]
            edge[:, r:] |= key[:, r:] != key[:, :-r]
            edge[:, :-r] |= key[:, :-r] != key[:, r:]
        _void(p, edge)

    _void(p, rng.random(p.shape) < recipe.void_rate)
    return p


def _void(m: LabelMap, mask: np.ndarray) -> None:
    m.sid[mask] = VOID
    m.iid[mask] = NO_INSTANCE
    m.pid[mask] = 0


def generate_scene(recipe: SceneRecipe, spec: DatasetSpec) -> tuple[LabelMap, LabelMap]:
    """Ground truth and a perturbed prediction for ``recipe``."""
    for sid, _ in recipe.roster:
        if sid not in spec.by_sid:
            raise KeyError(f"recipe roster references unknown sid {sid}")
    rng = _rng(recipe.seed)
    gt = _paint_gt(recipe, spec, rng)
    pred = _perturb(gt, recipe, spec, rng)
    return gt, pred


def synthetic_spec(seed: int, n_classes: int, max_parts: int = 3, stuff_parts: bool = True) -> DatasetSpec:
    """A small random class universe: roughly half stuff, half things,
    0..max_parts parts per class (stuff may carry parts)."""
    rng = _rng(seed ^ 0x5EED)
    classes = []
    for sid in range(1, n_classes + 1):
        kind = "things" if rng.random() < 0.5 else "stuff"
        nparts = int(rng.integers(0, max_parts + 1))
        if kind == "stuff" and not stuff_parts:
            nparts = 0
        classes.append((sid, f"class{sid}", kind, [f"part{j}" for j in range(1, nparts + 1)]))
    return make_spec(f"synthetic-{seed}", classes)


def random_recipe(
    seed: int,
    spec: DatasetSpec,
    size: tuple[int, int] = (16, 64),
    max_rate: float = 0.5,
    max_shapes: int = 4,
    width: int | None = None,
    height: int | None = None,
) -> SceneRecipe:
    """Sample a recipe over all of ``spec``'s classes with rates in [0, max_rate]."""
    rng = _rng(seed ^ 0xC0FFEE)
    w = width or int(rng.integers(size[0], size[1] + 1))
    h = height or int(rng.integers(size[0], size[1] + 1))
    sids = [c.sid for c in spec.scene_classes]
    order = sorted(sids, key=lambda s: (spec[s].is_things, s))
    roster = tuple((s, int(rng.integers(1, max_shapes + 1))) for s in order)
    r = lambda: float(rng.uniform(0.0, max_rate))  # noqa: E731
    return SceneRecipe(
        seed=seed,
        width=w,
        height=h,
        roster=roster,
        part_coverage=float(rng.uniform(0.5, 1.0)),
        partless_rate=r(),
        crowd_rate=r() / 2,
        erosion=int(rng.integers(0, 2)),
        class_flip=r(),
        part_flip=r(),
        split_rate=r(),
        merge_rate=r(),
        void_rate=r() / 5,
    )
