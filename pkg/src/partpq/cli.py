"""``partpq`` command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from partpq.codec import CodecError, LabelMap, validate_map
from partpq.io import (
    FORMATS,
    LabelFileError,
    _strip,
    gid_path,
    packed_paths,
    planar_paths,
    read_label_map,
    read_part_prediction,
    report_json,
    write_label_map,
    write_part_prediction,
    write_report,
)
from partpq.merging import STRATEGIES, MergeError, merge, remap_parts
from partpq.metrics import (
    PART_UNIVERSES,
    EvalOptions,
    ShapeError,
    confusion,
    finalize,
    finalize_image_result,
    miou_from_confusion,
    mpa_from_confusion,
    scene_from_parts,
    sig_counts,
    sig_report,
)
from partpq.parallel import DatasetError, FilePair, evaluate_items
from partpq.spec import DatasetSpec, PartGrouping, SpecError, resolve_spec

log = logging.getLogger("partpq")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DATA_ERRORS = (LabelFileError, CodecError, SpecError, MergeError, ShapeError, DatasetError, OSError, ValueError, KeyError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# directory pairing


def list_stems(directory: Path, fmt: str) -> dict[str, Path]:
    """Stem name -> stem path for every label file in ``directory``."""
    if not directory.is_dir():
        raise UsageError(f"not a directory: {directory}")
    out: dict[str, Path] = {}
    for f in sorted(directory.iterdir()):
        if f.suffix not in (".png", ".u32"):
            continue
        stem = _strip(f)
        if fmt == "planar" and not any(f.name.endswith(f"_{p}.png") for p in ("sem", "inst", "part", "gid")):
            continue
        if fmt == "packed" and stem.name != f.stem and not f.name.endswith("_gid.png"):
            continue
        out[stem.name] = stem
    return out


def pair_dirs(dirs: list[Path], fmt: str) -> list[tuple[str, list[Path]]]:
    """Pair stems across directories; any stem missing somewhere is an error."""
    listings = [list_stems(d, fmt) for d in dirs]
    every = sorted(set().union(*listings))
    problems = []
    for name in every:
        missing = [str(d) for d, lst in zip(dirs, listings) if name not in lst]
        if missing:
            problems.append(f"  {name}: missing in {', '.join(missing)}")
    if problems:
        raise DatasetError(f"{len(problems)} unpaired stem(s):\n" + "\n".join(problems))
    if not every:
        raise DatasetError(f"no label files found in {', '.join(map(str, dirs))}")
    return [(name, [lst[name] for lst in listings]) for name in every]


def read_manifest(path: Path, roles: list[str]) -> list[tuple[str, list[Path]]]:
    """JSON list of objects with one path per role (e.g. ``gt``/``pred``) and an optional ``stem``."""
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: invalid manifest JSON ({e})") from e
    if not isinstance(doc, list):
        raise DatasetError(f"{path}: manifest must be a JSON list")
    out = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict) or any(r not in entry for r in roles):
            raise DatasetError(f"{path}: entry {i} needs keys {roles}")
        paths = [_strip(path.parent / entry[r]) for r in roles]
        out.append((str(entry.get("stem", paths[0].name)), paths))
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise DatasetError(f"{path}: duplicate stems in manifest")
    return sorted(out)


def _pairs(args, dirs: list[str | None], roles: list[str]) -> list[tuple[str, list[Path]]]:
    if args.manifest:
        return read_manifest(Path(args.manifest), roles)
    if any(d is None for d in dirs):
        raise UsageError(f"need directories for {', '.join(roles)} (or --manifest)")
    return pair_dirs([Path(d) for d in dirs], args.format)


# ---------------------------------------------------------------------------
# helpers


def _spec(args) -> DatasetSpec:
    return resolve_spec(args.spec)


def _grouping(spec: DatasetSpec, name: str | None) -> PartGrouping | None:
    if name is None:
        return None
    try:
        return spec.grouping(name)
    except KeyError as e:
        raise UsageError(str(e)) from e


def _emit(report, args) -> None:
    if args.output:
        write_report(report, args.output)
        log.info("wrote %s", args.output)
    elif args.json:
        sys.stdout.write(report_json(report))


def _print_table(report, per_class: bool) -> None:
    print(report.table())
    if per_class:
        kq = report.keys[0]
        print(f"\n{'sid':>4s} {'name':20s} {kq:>8s} {'tp':>6s} {'fp':>6s} {'fn':>6s}")
        for c in report.classes:
            v = f"{100 * c.pq:.1f}" if c.defined else "-"
            print(f"{c.sid:4d} {c.name:20s} {v:>8s} {c.tp:6d} {c.fp:6d} {c.fn:6d}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_evaluate(args) -> int:
    spec = _spec(args)
    pairs = _pairs(args, [args.gt, args.pred], ["gt", "pred"])
    opts = EvalOptions(part_universe=args.part_universe, with_pq=True, with_miou=args.miou)
    items = [FilePair(name, gt, pred, args.format) for name, (gt, pred) in pairs]
    res = evaluate_items(items, spec, opts, workers=args.workers)
    report = finalize_image_result(res, spec)
    _emit(report, args)
    _print_table(report, args.per_class)
    return EXIT_OK


def cmd_pq(args) -> int:
    spec = _spec(args)
    pairs = _pairs(args, [args.gt, args.pred], ["gt", "pred"])
    items = [FilePair(name, gt, pred, args.format) for name, (gt, pred) in pairs]
    res = evaluate_items(items, spec, EvalOptions(with_pq=True), workers=args.workers)
    report = finalize(res.pq, spec, metric="PQ")
    _emit(report, args)
    _print_table(report, args.per_class)
    return EXIT_OK


def cmd_merge(args) -> int:
    spec = _spec(args)
    grouping = _grouping(spec, args.grouping)
    if not args.output:
        raise UsageError("merge needs --output DIR")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    pairs = _pairs(args, [args.panoptic, args.parts], ["panoptic", "parts"])
    for name, (pan_stem, part_stem) in pairs:
        panoptic = read_label_map(pan_stem, args.format, spec)
        try:
            parts = read_part_prediction(part_stem, args.format, spec, grouping)
        except LabelFileError as e:
            if grouping is None and gid_path(part_stem).exists():
                raise UsageError(f"{e}; pass --grouping") from e
            raise
        if parts.shape != panoptic.shape:
            raise ShapeError(f"{name}: panoptic {panoptic.shape} vs parts {parts.shape}")
        merged = merge(panoptic, parts, spec, args.strategy)
        bad = validate_map(merged, spec, limit=1)
        if bad:
            raise DatasetError(f"{name}: merged map invalid at pixel {bad[0].index}: {bad[0].rule}")
        write_label_map(merged, out / name, args.format)
    print(f"merged {len(pairs)} map(s) into {out}")
    return EXIT_OK


def _source_files(stem: Path, fmt: str) -> list[Path]:
    if fmt == "planar":
        return planar_paths(stem)
    return [p for p in packed_paths(stem) if p.exists()][:1]


def cmd_remap(args) -> int:
    spec = _spec(args)
    if not args.grouping:
        raise UsageError("remap needs --grouping NAME")
    grouping = _grouping(spec, args.grouping)
    if not args.output:
        raise UsageError("remap needs --output DIR")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    pairs = _pairs(args, [args.parts], ["parts"])
    for name, (stem,) in pairs:
        m = read_label_map(stem, args.format, spec)
        if grouping.is_identity:
            # the identity leaves every label unchanged, so the files are copied verbatim
            remap_parts(m, grouping, "identity-check")
            for src in _source_files(stem, args.format):
                shutil.copyfile(src, out / src.name.replace(stem.name, name, 1))
        else:
            write_part_prediction(remap_parts(m, grouping), out / name, args.format)
    print(f"remapped {len(pairs)} map(s) with grouping {grouping.name!r} into {out}")
    return EXIT_OK


def cmd_sig(args) -> int:
    spec = _spec(args)
    pairs = _pairs(args, [args.pred_a, args.pred_b, args.gt], ["a", "b", "gt"])
    counts = None
    classes = spec.evaluated
    conf = {"A": 0, "B": 0}
    for name, (sa, sb, sg) in pairs:
        for stem in (sa, sb):
            if gid_path(stem).exists():
                raise DatasetError(f"{name}: ambiguous scene class: grouped part labels cannot be projected")
        gt = read_label_map(sg, args.format, spec).sid
        a = scene_from_parts(read_part_prediction(sa, args.format, spec), spec)
        b = scene_from_parts(read_part_prediction(sb, args.format, spec), spec)
        c = sig_counts(a, b, gt, spec)
        counts = c if counts is None else counts + c
        conf["A"] = conf["A"] + confusion(gt, a, classes)
        conf["B"] = conf["B"] + confusion(gt, b, classes)
    report = sig_report(counts, spec)
    parted = [classes.index(s) for s in spec.with_parts if s in classes]
    report.miou = {k: miou_from_confusion(v)[1] for k, v in conf.items()}
    report.mpa = {k: _mean_over(mpa_from_confusion(v)[0], parted) for k, v in conf.items()}
    _emit(report, args)
    print("mSIG: " + ("undefined" if report.msig is None else f"{report.msig:.1f}"))
    for k in ("A", "B"):
        print(f"{k}: mIOU {_pct(report.miou[k])}  mPA(P) {_pct(report.mpa[k])}")
    if args.per_class:
        for sid, v in report.per_class.items():
            print(f"{sid:4d} {spec[sid].name:20s} {'-' if v is None else f'{v:.1f}':>6s}")
    return EXIT_OK


def _mean_over(per: list[float | None], idx: list[int]) -> float | None:
    vals = [per[i] for i in idx if per[i] is not None]
    return sum(vals) / len(vals) if vals else None


def _pct(x: float | None) -> str:
    return "-" if x is None else f"{100 * x:.1f}"


def cmd_validate(args) -> int:
    spec = _spec(args)
    if args.manifest:
        stems = [p for _, (p,) in read_manifest(Path(args.manifest), ["map"])]
    else:
        stems = [list_stems(Path(d), args.format) for d in args.dirs]
        stems = [p for lst in stems for _, p in sorted(lst.items())]
    failed = 0
    for stem in stems:
        try:
            m = read_label_map(stem, args.format, spec, validate=False)
        except (LabelFileError, CodecError) as e:
            print(f"{stem}: {e}")
            failed += 1
            continue
        bad = validate_map(m, spec, limit=args.limit)
        for v in bad:
            print(f"{stem}: pixel {v.index} uid {v.uid}: {v.rule}")
        failed += bool(bad)
    print(f"{len(stems) - failed}/{len(stems)} valid")
    return EXIT_OK if failed == 0 else EXIT_DATA


def cmd_synth(args) -> int:
    from partpq.harness.synth import SceneRecipe, generate_scene, random_recipe

    spec = _spec(args)
    if not args.output:
        raise UsageError("synth needs --output DIR")
    out = Path(args.output)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    (out / "pred").mkdir(parents=True, exist_ok=True)
    recipes = []
    for k in range(args.count):
        if args.recipe:
            base = SceneRecipe.from_dict(json.loads(Path(args.recipe).read_text()))
            r = SceneRecipe.from_dict({**base.to_dict(), "seed": base.seed + k})
        else:
            r = random_recipe(args.seed + k, spec, width=args.width, height=args.height, max_rate=args.max_rate)
        gt, pred = generate_scene(r, spec)
        name = f"scene_{k:05d}"
        write_label_map(gt, out / "gt" / name, args.format)
        write_label_map(pred, out / "pred" / name, args.format)
        recipes.append({"stem": name, **r.to_dict()})
    (out / "recipes.json").write_text(json.dumps({"spec": spec.name, "recipes": recipes}, indent=2) + "\n")
    print(f"wrote {args.count} scene pair(s) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# colorize


def _mix(x: np.ndarray) -> np.ndarray:
    """splitmix64 finaliser: a fixed, well-spread hash."""
    x = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    return x


def palette(sid: np.ndarray, pid: np.ndarray) -> np.ndarray:
    """Deterministic RGB per (sid, pid); void is black."""
    h = _mix(sid.astype(np.int64) * 65536 + pid)
    rgb = np.stack([(h >> np.uint64(s)) & np.uint64(0xFF) for s in (0, 8, 16)], axis=-1).astype(np.uint8)
    rgb = rgb // 2 + 48  # keep away from black and white
    rgb[sid == 0] = 0
    return rgb


def contours(m: LabelMap) -> np.ndarray:
    """Pixels of things instances that border a different segment."""
    key = m.sid.astype(np.int64) * 4096 + m.iid + 1
    edge = np.zeros(m.shape, bool)
    dy = key[1:, :] != key[:-1, :]
    dx = key[:, 1:] != key[:, :-1]
    edge[1:, :] |= dy
    edge[:-1, :] |= dy
    edge[:, 1:] |= dx
    edge[:, :-1] |= dx
    return edge & (m.iid >= 0)


def colorize(m: LabelMap) -> np.ndarray:
    rgb = palette(m.sid, m.pid)
    rgb[contours(m)] = 255
    return rgb


def cmd_colorize(args) -> int:
    spec = _spec(args)
    m = read_label_map(args.map, args.format, spec, validate=False)
    out = Path(args.output) if args.output else _strip(Path(args.map)).with_name(_strip(Path(args.map)).name + "_color.png")
    Image.fromarray(colorize(m), "RGB").save(out, format="PNG")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", default="cpp", help="builtin spec name (cpp, ppp) or path to a spec JSON")
    common.add_argument("--format", choices=FORMATS, default=None, help="packed (default) or planar; synth defaults to planar")
    common.add_argument("--workers", type=int, default=None, help="worker processes (default: all CPUs)")
    common.add_argument("--output", "-o", default=None)
    common.add_argument("--per-class", action="store_true")
    common.add_argument("--grouping", default=None, metavar="NAME")
    common.add_argument("--part-universe", choices=PART_UNIVERSES, default="present")
    common.add_argument("--manifest", default=None, help="JSON list of file entries instead of directories")
    common.add_argument("--json", action="store_true", help="print the report JSON when no --output is given")

    p = _Parser(prog="partpq", description="Part-aware panoptic evaluation tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("evaluate", parents=[common], help="PartPQ (+ PQ) over paired directories")
    e.add_argument("gt", nargs="?")
    e.add_argument("pred", nargs="?")
    e.add_argument("--miou", action="store_true", help="add a scene-level mIOU block")
    e.set_defaults(func=cmd_evaluate)

    q = sub.add_parser("pq", parents=[common], help="plain PQ over paired directories")
    q.add_argument("gt", nargs="?")
    q.add_argument("pred", nargs="?")
    q.set_defaults(func=cmd_pq)

    m = sub.add_parser("merge", parents=[common], help="merge panoptic and part predictions")
    m.add_argument("panoptic", nargs="?")
    m.add_argument("parts", nargs="?")
    m.add_argument("--strategy", choices=STRATEGIES, default="topdown")
    m.set_defaults(func=cmd_merge)

    r = sub.add_parser("remap", parents=[common], help="map part labels to group ids")
    r.add_argument("parts", nargs="?")
    r.set_defaults(func=cmd_remap)

    s = sub.add_parser("sig", parents=[common], help="semantic information gain of A over B")
    s.add_argument("pred_a", nargs="?")
    s.add_argument("pred_b", nargs="?")
    s.add_argument("gt", nargs="?")
    s.set_defaults(func=cmd_sig)

    v = sub.add_parser("validate", parents=[common], help="check label maps against the dataset spec")
    v.add_argument("dirs", nargs="*")
    v.add_argument("--limit", type=int, default=20, help="violations listed per file")
    v.set_defaults(func=cmd_validate)

    y = sub.add_parser("synth", parents=[common], help="write synthetic gt/pred pairs")
    y.add_argument("--count", type=int, default=10)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--width", type=int, default=None)
    y.add_argument("--height", type=int, default=None)
    y.add_argument("--max-rate", type=float, default=0.5)
    y.add_argument("--recipe", default=None, help="recipe JSON; seeds increment per scene")
    y.set_defaults(func=cmd_synth)

    c = sub.add_parser("colorize", parents=[common], help="render a label map as RGB")
    c.add_argument("map")
    c.set_defaults(func=cmd_colorize)
    return p


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("PARTPQ_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, None) if not level.isdigit() else int(level),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = "planar" if args.command == "synth" else "packed"
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"partpq: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as e:
        print(f"partpq: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
