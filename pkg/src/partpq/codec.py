"""Per-pixel label triples, label maps and the packed decimal uid codec.

Packed uid layout (sid <= 99):

    0                          void
    sid                        stuff, or things crowd region
    sid * 1000 + iid           things instance, no part label
    sid * 100000 + iid * 100 + pid
                               part-labelled pixel; iid digits are 0 for stuff

Part labels on things pixels without an instance id (crowd) cannot be
expressed in this form: they decode with iid 0. Use the planar format there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from partpq.spec import VOID, DatasetSpec

NO_INSTANCE = -1
MAX_PACKED_SID = 99
MAX_IID = 999
MAX_PACKED_PID = 99
MAX_UID = 9_999_999


class CodecError(ValueError):
    pass


class LabelTriple(NamedTuple):
    sid: int
    iid: int | None = None
    pid: int | None = None

    @classmethod
    def void(cls) -> "LabelTriple":
        return cls(VOID, None, None)


def encode_uid(t: LabelTriple) -> int:
    sid, iid, pid = t
    pid = pid or None
    if sid == VOID:
        if iid is not None or pid is not None:
            raise CodecError("void pixel cannot carry an instance or part id")
        return 0
    if not 1 <= sid <= MAX_PACKED_SID:
        raise CodecError(f"sid {sid} exceeds packed range 1..{MAX_PACKED_SID}; use the planar format")
    if iid is not None and not 0 <= iid <= MAX_IID:
        raise CodecError(f"iid {iid} outside 0..{MAX_IID}")
    if pid is not None and not 1 <= pid <= MAX_PACKED_PID:
        raise CodecError(f"pid {pid} outside 1..{MAX_PACKED_PID}")
    if pid is None:
        return sid if iid is None else sid * 1000 + iid
    return sid * 100_000 + (iid or 0) * 100 + pid


def _split_uid(uid: int) -> LabelTriple:
    """Structural decode without spec lookup; iid digits are kept as-is."""
    if uid < 0 or uid > MAX_UID:
        raise CodecError(f"uid {uid} outside 0..{MAX_UID}")
    if uid == 0:
        return LabelTriple.void()
    if uid < 100:
        return LabelTriple(uid, None, None)
    if uid < 1000:
        raise CodecError(f"uid {uid} has no valid 3-digit form")
    if uid < 100_000:
        return LabelTriple(uid // 1000, uid % 1000, None)
    return LabelTriple(uid // 100_000, (uid // 100) % 1000, uid % 100 or None)


def decode_uid(uid: int, spec: DatasetSpec) -> LabelTriple:
    sid, iid, pid = _split_uid(int(uid))
    if sid == VOID:
        return LabelTriple.void()
    if sid not in spec.by_sid:
        raise CodecError(f"uid {uid}: unknown sid {sid}")
    cls = spec[sid]
    if pid is not None:
        if pid not in cls.pids:
            raise CodecError(f"uid {uid}: pid {pid} not a part of class {sid} ({cls.name})")
        if not cls.is_things:
            if iid:
                raise CodecError(f"uid {uid}: instance on stuff class {sid} ({cls.name})")
            iid = None
    elif iid is not None and not cls.is_things:
        raise CodecError(f"uid {uid}: instance on stuff class {sid} ({cls.name})")
    return LabelTriple(sid, iid, pid)


@dataclass(eq=False)
class LabelMap:
    """Row-major grid of (sid, iid, pid) triples stored as three int32 planes.

    ``iid`` is -1 where no instance id is present; ``pid`` is 0 for void or none.
    """

    sid: np.ndarray
    iid: np.ndarray
    pid: np.ndarray

    def __post_init__(self) -> None:
        self.sid = np.ascontiguousarray(self.sid, dtype=np.int32)
        self.iid = np.ascontiguousarray(self.iid, dtype=np.int32)
        self.pid = np.ascontiguousarray(self.pid, dtype=np.int32)
        if not (self.sid.shape == self.iid.shape == self.pid.shape) or self.sid.ndim != 2:
            raise CodecError(
                f"plane shapes differ or are not 2-D: {self.sid.shape}, {self.iid.shape}, {self.pid.shape}"
            )
        if self.sid.size == 0:
            raise CodecError("label map must contain at least one pixel")

    @classmethod
    def empty(cls, height: int, width: int) -> "LabelMap":
        z = np.zeros((height, width), np.int32)
        return cls(z, np.full_like(z, NO_INSTANCE), z.copy())

    @classmethod
    def from_triples(cls, rows: list[list[LabelTriple | tuple]]) -> "LabelMap":
        h, w = len(rows), len(rows[0])
        m = cls.empty(h, w)
        for y, row in enumerate(rows):
            if len(row) != w:
                raise CodecError("ragged rows")
            for x, t in enumerate(row):
                t = LabelTriple(*t)
                m.sid[y, x] = t.sid
                m.iid[y, x] = NO_INSTANCE if t.iid is None else t.iid
                m.pid[y, x] = t.pid or 0
        return m

    @property
    def height(self) -> int:
        return self.sid.shape[0]

    @property
    def width(self) -> int:
        return self.sid.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.sid.shape

    def __getitem__(self, yx: tuple[int, int]) -> LabelTriple:
        iid = int(self.iid[yx])
        pid = int(self.pid[yx])
        return LabelTriple(int(self.sid[yx]), None if iid < 0 else iid, pid or None)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMap):
            return NotImplemented
        return (
            np.array_equal(self.sid, other.sid)
            and np.array_equal(self.iid, other.iid)
            and np.array_equal(self.pid, other.pid)
        )

    def copy(self) -> "LabelMap":
        return LabelMap(self.sid.copy(), self.iid.copy(), self.pid.copy())


def encode_map(m: LabelMap) -> np.ndarray:
    """Vectorised :func:`encode_uid` over a whole map (uint32)."""
    sid = m.sid.astype(np.int64)
    iid = m.iid.astype(np.int64)
    pid = m.pid.astype(np.int64)
    void = sid == VOID
    if np.any(void & ((iid >= 0) | (pid != 0))):
        raise CodecError("void pixel carries an instance or part id")
    if np.any((sid < 0) | (sid > MAX_PACKED_SID)):
        raise CodecError(f"sid above {MAX_PACKED_SID} present; use the planar format")
    if np.any((iid < NO_INSTANCE) | (iid > MAX_IID)):
        raise CodecError(f"iid outside 0..{MAX_IID}")
    if np.any((pid < 0) | (pid > MAX_PACKED_PID)):
        raise CodecError(f"pid outside 1..{MAX_PACKED_PID}")
    has_i = iid >= 0
    has_p = pid > 0
    uid = np.where(has_i, sid * 1000 + iid, sid)
    uid = np.where(has_p, sid * 100_000 + np.where(has_i, iid, 0) * 100 + pid, uid)
    return uid.astype(np.uint32)


def decode_map(uids: np.ndarray, spec: DatasetSpec) -> LabelMap:
    """Vectorised :func:`decode_uid`; raises CodecError naming the first bad uid."""
    u = np.asarray(uids).astype(np.int64)
    bad = (u < 0) | (u > MAX_UID) | ((u >= 100) & (u < 1000))
    if np.any(bad):
        raise CodecError(f"invalid uid {int(u[bad].flat[0])}")
    small = u < 100
    mid = (u >= 1000) & (u < 100_000)
    sid = np.where(small, u, np.where(mid, u // 1000, u // 100_000))
    iid = np.where(small, NO_INSTANCE, np.where(mid, u % 1000, (u // 100) % 1000))
    pid = np.where(u >= 100_000, u % 100, 0)

    lut = _kind_lut(spec, int(sid.max()))
    kind = lut[sid]
    unknown = (kind < 0) & (sid != VOID)
    if np.any(unknown):
        raise CodecError(f"uid {int(u[unknown].flat[0])}: unknown sid {int(sid[unknown].flat[0])}")
    stuff = kind == 0
    # stuff-with-parts carries iid digits 0; they mean "no instance"
    iid = np.where(stuff & (u >= 100_000) & (iid == 0), NO_INSTANCE, iid)
    wrong = stuff & (iid >= 0)
    if np.any(wrong):
        raise CodecError(f"uid {int(u[wrong].flat[0])}: instance on stuff class")
    m = LabelMap(sid.astype(np.int32), iid.astype(np.int32), pid.astype(np.int32))
    pid_ok = _pid_ok(m, spec)
    if not np.all(pid_ok):
        raise CodecError(f"uid {int(u[~pid_ok].flat[0])}: part id not defined for its class")
    return m


def _kind_lut(spec: DatasetSpec, upto: int) -> np.ndarray:
    """sid -> 1 for things, 0 for stuff, -1 for unknown/void."""
    lut = np.full(max(upto, spec.max_sid) + 1, -1, np.int8)
    for c in spec.scene_classes:
        lut[c.sid] = 1 if c.is_things else 0
    return lut


def part_table(spec: DatasetSpec, max_sid: int | None = None, max_pid: int | None = None) -> np.ndarray:
    """Boolean table ``t[sid, pid]`` true when pid is a part of sid."""
    ms = max(spec.max_sid, max_sid or 0)
    mp = max(spec.max_pid, max_pid or 0)
    t = np.zeros((ms + 1, mp + 1), bool)
    for s, p in spec.all_parts:
        t[s, p] = True
    return t


def _pid_ok(m: LabelMap, spec: DatasetSpec) -> np.ndarray:
    has_p = m.pid > 0
    if not np.any(has_p):
        return np.ones(m.shape, bool)
    table = part_table(spec, int(m.sid.max()), int(m.pid.max()))
    ok = np.ones(m.shape, bool)
    ok[has_p] = table[m.sid[has_p], m.pid[has_p]]
    return ok


class Violation(NamedTuple):
    index: int
    uid: int | None
    rule: str


RULE_VOID = "void pixel with instance or part id"
RULE_UNKNOWN = "unknown scene class"
RULE_STUFF_INSTANCE = "instance on stuff"
RULE_NO_PARTS = "part on L^no-parts class"
RULE_BAD_PID = "part id not in class vocabulary"
RULE_RANGE = "value out of range"


def validate_map(m: LabelMap, spec: DatasetSpec, limit: int | None = None) -> list[Violation]:
    """Check every pixel against the four legal combinations plus void.

    Never raises on pixel content. At most one violation is reported per
    pixel; ``limit`` caps the length of the returned list.
    """
    sid = m.sid.ravel()
    iid = m.iid.ravel()
    pid = m.pid.ravel()
    ms = max(spec.max_sid, 0)
    known = np.zeros(ms + 1, bool)
    things = np.zeros(ms + 1, bool)
    parted = np.zeros(ms + 1, bool)
    for c in spec.scene_classes:
        known[c.sid] = True
        things[c.sid] = c.is_things
        parted[c.sid] = c.has_parts
    in_lut = (sid >= 0) & (sid <= ms)
    s = np.where(in_lut, sid, 0)
    void = sid == VOID
    is_known = in_lut & known[s]
    has_i = iid >= 0
    has_p = pid != 0

    rule = np.full(sid.shape, -1, np.int8)
    checks = [
        (iid < NO_INSTANCE) | (iid > MAX_IID) | (pid < 0) | (pid > 65534),
        void & (has_i | has_p),
        ~void & ~is_known,
        is_known & ~things[s] & has_i,
        is_known & ~parted[s] & has_p,
    ]
    names = [RULE_RANGE, RULE_VOID, RULE_UNKNOWN, RULE_STUFF_INSTANCE, RULE_NO_PARTS]
    for k in range(len(checks) - 1, -1, -1):
        rule[checks[k]] = k
    cand = is_known & parted[s] & (pid > 0) & (rule < 0)
    if np.any(cand):
        table = part_table(spec, max_pid=int(pid[cand].max()))
        bad = np.zeros(sid.shape, bool)
        bad[cand] = ~table[sid[cand], pid[cand]]
        rule[bad] = len(names)
    names.append(RULE_BAD_PID)

    idx = np.flatnonzero(rule >= 0)
    if limit is not None:
        idx = idx[:limit]
    out = []
    for i in idx:
        t = (int(sid[i]), None if iid[i] < 0 else int(iid[i]), int(pid[i]) or None)
        try:
            uid: int | None = encode_uid(LabelTriple(*t))
        except CodecError:
            uid = None
        out.append(Violation(int(i), uid, names[rule[i]]))
    return out
