import numpy as np
import pytest
from helpers import CAR, ROAD, SKY, TOY, WHEEL, WIDE, grid, random_triples

from partpq.codec import (
    RULE_BAD_PID,
    RULE_NO_PARTS,
    RULE_STUFF_INSTANCE,
    RULE_UNKNOWN,
    RULE_VOID,
    CodecError,
    LabelMap,
    LabelTriple,
    decode_map,
    decode_uid,
    encode_map,
    encode_uid,
    validate_map,
)
from partpq.spec import builtin_spec

CPP = builtin_spec("cpp")


@pytest.mark.parametrize(
    "triple, uid",
    [
        (LabelTriple(26, 31, None), 26031),
        (LabelTriple(26, 31, 4), 2603104),
        (LabelTriple.void(), 0),
        (LabelTriple(23), 23),
        (LabelTriple(26, 0, 5), 2600005),
    ],
)
def test_encode_examples(triple, uid):
    assert encode_uid(triple) == uid
    assert decode_uid(uid, CPP) == triple


def test_decode_examples():
    assert decode_uid(2603104, CPP) == (26, 31, 4)
    assert decode_uid(23, CPP) == (23, None, None)
    with pytest.raises(CodecError):
        decode_uid(9999999, CPP)  # sid 99 undefined


@pytest.mark.parametrize(
    "uid",
    [
        123,  # 3-digit form does not exist
        7001,  # instance on road (stuff)
        2600009,  # car has no pid 9
        2300101,  # part on sky
        10_000_000,  # out of range
        -1,
    ],
)
def test_decode_rejects(uid):
    with pytest.raises(CodecError):
        decode_uid(uid, CPP)


@pytest.mark.parametrize(
    "triple",
    [LabelTriple(0, 1, None), LabelTriple(100, None, None), LabelTriple(26, 1000, None), LabelTriple(26, 1, 100)],
)
def test_encode_rejects(triple):
    with pytest.raises(CodecError):
        encode_uid(triple)


def test_crowd_with_parts_collides_with_iid_zero():
    # documented limitation of the packed form
    assert encode_uid(LabelTriple(26, None, 2)) == encode_uid(LabelTriple(26, 0, 2))


def test_fuzz_vectorised_round_trip():
    rng = np.random.default_rng(7)
    sid, iid, pid = random_triples(rng, WIDE, 1_000_000)
    m = LabelMap(sid.reshape(1000, 1000), iid.reshape(1000, 1000), pid.reshape(1000, 1000))
    assert decode_map(encode_map(m), WIDE) == m
    assert validate_map(m, WIDE) == []


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(8)
    sid, iid, pid = random_triples(rng, WIDE, 20_000)
    m = LabelMap(sid.reshape(100, 200), iid.reshape(100, 200), pid.reshape(100, 200))
    uids = encode_map(m).ravel()
    for k in range(0, uids.size, 7):
        t = LabelTriple(int(sid[k]), None if iid[k] < 0 else int(iid[k]), int(pid[k]) or None)
        assert encode_uid(t) == uids[k]
        assert decode_uid(int(uids[k]), WIDE) == t


def test_decode_map_rejects_bad_uid():
    with pytest.raises(CodecError):
        decode_map(np.array([[7, 7001]]), CPP)


def test_label_map_access():
    m = grid(["rc", ".w"], {"r": (ROAD,), "c": (CAR, 2), "w": (CAR, 2, WHEEL)})
    assert m[0, 0] == (ROAD, None, None)
    assert m[0, 1] == (CAR, 2, None)
    assert m[1, 0] == LabelTriple.void()
    assert m[1, 1] == (CAR, 2, WHEEL)
    assert m.shape == (2, 2)
    assert m == m.copy()
    with pytest.raises(CodecError):
        LabelMap(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


def test_validate_pid_on_sky():
    m = LabelMap.from_triples([[(SKY, None, None), (SKY, None, 1)]])
    v = validate_map(m, TOY)
    assert len(v) == 1
    assert v[0].index == 1 and v[0].rule == RULE_NO_PARTS


def test_validate_iid_on_road():
    m = LabelMap.from_triples([[(ROAD, 4, None), (ROAD, None, None)]])
    v = validate_map(m, TOY)
    assert [(x.index, x.rule) for x in v] == [(0, RULE_STUFF_INSTANCE)]


def test_validate_rules():
    m = LabelMap(
        np.array([[0, 55, CAR, CAR, 0]]),
        np.array([[-1, -1, 1, 1, 3]]),
        np.array([[0, 0, 9, 1, 0]]),
    )
    rules = [(v.index, v.rule) for v in validate_map(m, TOY)]
    assert rules == [(1, RULE_UNKNOWN), (2, RULE_BAD_PID), (4, RULE_VOID)]
    assert len(validate_map(m, TOY, limit=1)) == 1


def test_validate_is_total():
    rng = np.random.default_rng(0)
    m = LabelMap(
        rng.integers(-5, 300, (40, 40)),
        rng.integers(-10, 2000, (40, 40)),
        rng.integers(-3, 70000, (40, 40)),
    )
    v = validate_map(m, TOY)
    assert len({x.index for x in v}) == len(v)
    assert all(0 <= x.index < 1600 for x in v)
