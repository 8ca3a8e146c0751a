import json

import numpy as np
import pytest
from helpers import TOY, WIDE, random_triples
from PIL import Image

from partpq.codec import LabelMap
from partpq.io import (
    LabelFileError,
    read_label_map,
    read_part_prediction,
    read_uids,
    write_label_map,
    write_part_prediction,
    write_report,
)
from partpq.merging import PartPrediction
from partpq.metrics import ClassAccumulator, finalize
from partpq.spec import builtin_spec

CPP = builtin_spec("cpp")
PPP = builtin_spec("ppp")


def _random_map(rng, spec, h, w):
    sid, iid, pid = random_triples(rng, spec, h * w)
    return LabelMap(sid.reshape(h, w), iid.reshape(h, w), pid.reshape(h, w))


@pytest.mark.parametrize("fmt", ["packed", "planar"])
def test_round_trip(tmp_path, fmt):
    rng = np.random.default_rng(1)
    for k in range(20):
        m = _random_map(rng, WIDE, int(rng.integers(1, 30)), int(rng.integers(1, 30)))
        write_label_map(m, tmp_path / f"m{k}", fmt)
        assert read_label_map(tmp_path / f"m{k}", fmt, WIDE) == m


def test_packed_small_uids_use_png(tmp_path):
    m = LabelMap.from_triples([[(7,), (26, 3)]])
    (path,) = write_label_map(m, tmp_path / "a", "packed")
    assert path.suffix == ".png"
    with Image.open(path) as im:
        assert im.mode.startswith("I;16")


def test_packed_large_uids_use_sidecar(tmp_path):
    m = LabelMap.from_triples([[(26, 31, 4), (7,)]])
    (path,) = write_label_map(m, tmp_path / "a", "packed")
    assert path.suffix == ".u32"
    assert path.read_bytes()[:8] == (2).to_bytes(4, "little") + (1).to_bytes(4, "little")
    assert read_label_map(tmp_path / "a", "packed", CPP)[0, 0] == (26, 31, 4)
    assert read_uids(tmp_path / "a")[0, 0] == 2603104


def test_planar_holds_large_sids(tmp_path):
    sid = max(PPP.by_sid)
    m = LabelMap.from_triples([[(sid,), (0,)]])
    write_label_map(m, tmp_path / "p", "planar")
    assert read_label_map(tmp_path / "p_sem.png", "planar", PPP) == m


def test_planar_dimension_mismatch(tmp_path):
    m = LabelMap.empty(32, 32)
    write_label_map(m, tmp_path / "x", "planar")
    Image.fromarray(np.zeros((16, 16), np.uint16)).save(tmp_path / "x_inst.png")
    with pytest.raises(LabelFileError, match="dimension"):
        read_label_map(tmp_path / "x", "planar", TOY)


def test_invalid_content_is_reported(tmp_path):
    m = LabelMap.from_triples([[(1,), (1, 4)]])  # instance on road
    write_label_map(m, tmp_path / "bad", "planar")
    with pytest.raises(LabelFileError, match="pixel 1"):
        read_label_map(tmp_path / "bad", "planar", TOY)
    assert read_label_map(tmp_path / "bad", "planar", TOY, validate=False) == m


def test_missing_and_corrupt_files(tmp_path):
    with pytest.raises(LabelFileError):
        read_label_map(tmp_path / "none", "packed", TOY)
    (tmp_path / "junk.png").write_bytes(b"not a png")
    with pytest.raises(LabelFileError):
        read_label_map(tmp_path / "junk", "packed", TOY)
    (tmp_path / "short.u32").write_bytes(b"\x01\x00\x00\x00\x01\x00\x00\x00")
    with pytest.raises(LabelFileError, match="holds 0"):
        read_label_map(tmp_path / "short", "packed", TOY)


def test_grouped_part_prediction_needs_grouping(tmp_path):
    g = CPP.grouping("grouped")
    parts = PartPrediction(gid=np.array([[0, 3], [9, 1]]), grouping=g)
    write_part_prediction(parts, tmp_path / "q", "packed")
    assert read_part_prediction(tmp_path / "q", "packed", CPP, g) == parts
    with pytest.raises(LabelFileError, match="grouping"):
        read_part_prediction(tmp_path / "q", "packed", CPP)


def test_ungrouped_part_prediction_round_trip(tmp_path):
    parts = PartPrediction(sid=np.array([[24, 26, 7]]), pid=np.array([[2, 5, 0]]))
    write_part_prediction(parts, tmp_path / "u", "packed")
    assert read_part_prediction(tmp_path / "u", "packed", CPP) == parts


def _one_class_report():
    return finalize({7: ClassAccumulator(7, tp=1, fp=1, fn=0, sum_iou=0.8)}, CPP)


def test_report_json_schema_and_determinism(tmp_path):
    r = _one_class_report()
    a = write_report(r, tmp_path / "a.json").read_bytes()
    b = write_report(r, tmp_path / "b.json").read_bytes()
    assert a == b
    doc = json.loads(a)
    road = next(c for c in doc["classes"] if c["sid"] == 7)
    assert {"partpq", "partsq", "partrq", "tp", "fp", "fn"} <= set(road)
    assert road["partpq"] == pytest.approx(0.8 / 1.5, abs=1e-15)
    assert road["display"]["partpq"] == 53.3


def test_report_csv_rows(tmp_path):
    r = _one_class_report()
    text = write_report(r, tmp_path / "r.csv").read_text().splitlines()
    assert text[0].startswith("row,sid,name,partpq")
    class_rows = [t for t in text if t.startswith("class,")]
    agg = [t.split(",")[2] for t in text if t.startswith("aggregate,")]
    assert len(class_rows) == len(CPP.evaluated)
    assert agg == ["All", "P", "NP", "Things", "Stuff"]
    with pytest.raises(ValueError):
        write_report(r, tmp_path / "r.txt", fmt="xml")
