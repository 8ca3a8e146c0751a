"""Label-map files and report serialisation.

Packed format: ``<stem>.png``, 16-bit grayscale holding packed uids, or
``<stem>.u32`` when some uid exceeds 65535 (little-endian uint32 width and
height, then row-major little-endian uint32 uids).

Planar format: ``<stem>_sem.png``, ``<stem>_inst.png``, ``<stem>_part.png``,
16-bit grayscale, 65535 meaning "none". Supports sids above 99.

Grouped part predictions: ``<stem>_gid.png``, 16-bit grayscale group ids.
"""

from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from partpq.codec import (
    NO_INSTANCE,
    CodecError,
    LabelMap,
    decode_map,
    encode_map,
    validate_map,
)
from partpq.merging import PartPrediction
from partpq.spec import DatasetSpec, PartGrouping

FORMATS = ("packed", "planar")
NONE16 = 65535
PLANES = ("sem", "inst", "part")
_U32_HEADER = struct.Struct("<II")


class LabelFileError(ValueError):
    pass


def _read_png16(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("I;16", "I", "L", "I;16B"):
                raise LabelFileError(f"{path}: expected a single-channel image, got mode {im.mode}")
            return np.array(im).astype(np.int32)
    except (OSError, SyntaxError) as e:
        raise LabelFileError(f"{path}: unreadable image ({e})") from e


def _write_png16(path: Path, arr: np.ndarray) -> None:
    if arr.min(initial=0) < 0 or arr.max(initial=0) > NONE16:
        raise LabelFileError(f"{path}: values outside the 16-bit range")
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint16)).save(path, format="PNG")


def _strip(path: Path) -> Path:
    """``dir/a_sem.png`` -> ``dir/a``; bare stems pass through."""
    name = path.name
    for ext in (".png", ".u32"):
        if name.endswith(ext):
            name = name[: -len(ext)]
            for suf in ("_sem", "_inst", "_part", "_gid"):
                if name.endswith(suf):
                    name = name[: -len(suf)]
                    break
            break
    return path.with_name(name)


def packed_paths(stem: Path) -> tuple[Path, Path]:
    stem = _strip(Path(stem))
    return stem.with_name(stem.name + ".png"), stem.with_name(stem.name + ".u32")


def planar_paths(stem: Path) -> list[Path]:
    stem = _strip(Path(stem))
    return [stem.with_name(f"{stem.name}_{p}.png") for p in PLANES]


def read_uids(stem: Path) -> np.ndarray:
    png, raw = packed_paths(stem)
    if png.exists():
        return _read_png16(png)
    if raw.exists():
        data = raw.read_bytes()
        if len(data) < _U32_HEADER.size:
            raise LabelFileError(f"{raw}: truncated header")
        w, h = _U32_HEADER.unpack_from(data)
        body = np.frombuffer(data, dtype="<u4", offset=_U32_HEADER.size)
        if body.size != w * h:
            raise LabelFileError(f"{raw}: header says {w}x{h} but holds {body.size} values")
        return body.reshape(h, w).astype(np.int64)
    raise LabelFileError(f"no packed label file for stem {stem} ({png.name} or {raw.name})")


def read_planes(stem: Path) -> LabelMap:
    arrays = []
    for p in planar_paths(stem):
        if not p.exists():
            raise LabelFileError(f"missing plane {p}")
        arrays.append(_read_png16(p))
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise LabelFileError(f"planar map {stem}: dimension mismatch between planes {[a.shape for a in arrays]}")
    sem, inst, part = arrays
    sem = np.where(sem == NONE16, 0, sem)
    inst = np.where(inst == NONE16, NO_INSTANCE, inst)
    part = np.where(part == NONE16, 0, part)
    return LabelMap(sem, inst, part)


def read_label_map(stem: str | Path, fmt: str, spec: DatasetSpec, validate: bool = True) -> LabelMap:
    """Read a label map; with ``validate`` any rule violation raises."""
    stem = Path(stem)
    if fmt == "packed":
        try:
            m = decode_map(read_uids(stem), spec)
        except CodecError as e:
            raise LabelFileError(f"{stem}: {e}") from e
    elif fmt == "planar":
        m = read_planes(stem)
    else:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    if validate:
        bad = validate_map(m, spec, limit=1)
        if bad:
            v = bad[0]
            raise LabelFileError(f"{stem}: pixel {v.index} (uid {v.uid}): {v.rule}")
    return m


def write_label_map(m: LabelMap, stem: str | Path, fmt: str) -> list[Path]:
    stem = _strip(Path(stem))
    if fmt == "packed":
        uids = encode_map(m)
        png, raw = packed_paths(stem)
        if int(uids.max()) <= NONE16:
            _write_png16(png, uids)
            return [png]
        with open(raw, "wb") as f:
            f.write(_U32_HEADER.pack(m.width, m.height))
            f.write(uids.astype("<u4").tobytes())
        return [raw]
    if fmt == "planar":
        sem = m.sid
        inst = np.where(m.iid < 0, NONE16, m.iid)
        part = np.where(m.pid == 0, NONE16, m.pid)
        paths = planar_paths(stem)
        for p, arr in zip(paths, (sem, inst, part)):
            _write_png16(p, arr)
        return paths
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")


def gid_path(stem: Path) -> Path:
    stem = _strip(Path(stem))
    return stem.with_name(stem.name + "_gid.png")


def read_part_prediction(
    stem: str | Path, fmt: str, spec: DatasetSpec, grouping: PartGrouping | None = None
) -> PartPrediction:
    """Grouped predictions (``<stem>_gid.png``) need ``grouping``."""
    stem = Path(stem)
    gp = gid_path(stem)
    if gp.exists():
        if grouping is None:
            raise LabelFileError(f"{gp}: grouped part prediction supplied without a grouping")
        return PartPrediction(gid=_read_png16(gp), grouping=grouping)
    return PartPrediction.from_label_map(read_label_map(stem, fmt, spec, validate=False))


def write_part_prediction(parts: PartPrediction, stem: str | Path, fmt: str) -> list[Path]:
    if parts.grouped:
        p = gid_path(Path(stem))
        _write_png16(p, parts.gid)
        return [p]
    m = LabelMap(parts.sid, np.full(parts.sid.shape, NO_INSTANCE), parts.pid)
    return write_label_map(m, stem, fmt)


# ---------------------------------------------------------------------------
# reports


def report_json(report: Any) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_csv(report: Any) -> str:
    buf = _io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(report.csv_rows())
    return buf.getvalue()


def write_report(report: Any, path: str | Path, fmt: str | None = None) -> Path:
    """Write a report as JSON or CSV; the format defaults to the file suffix."""
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "json")
    if fmt == "json":
        text = report_json(report)
    elif fmt == "csv":
        text = report_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    return path
