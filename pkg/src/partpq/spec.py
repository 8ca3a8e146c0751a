"""Dataset specifications: scene classes, part vocabularies and part groupings."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

VOID = 0
STUFF = "stuff"
THINGS = "things"


class SpecError(ValueError):
    """Raised for malformed or inconsistent dataset specifications."""


@dataclass(frozen=True)
class PartClass:
    pid: int
    name: str


@dataclass(frozen=True)
class SceneClass:
    sid: int
    name: str
    kind: str
    parts: tuple[PartClass, ...] = ()
    evaluate: bool = True

    @property
    def is_things(self) -> bool:
        return self.kind == THINGS

    @property
    def has_parts(self) -> bool:
        return bool(self.parts)

    @cached_property
    def pids(self) -> frozenset[int]:
        return frozenset(p.pid for p in self.parts)


@dataclass(frozen=True)
class PartGrouping:
    """Many-to-one map from (sid, pid) pairs onto group ids."""

    name: str
    map: Mapping[tuple[int, int], int]
    group_names: Mapping[int, str]

    @cached_property
    def members(self) -> dict[int, tuple[tuple[int, int], ...]]:
        out: dict[int, list[tuple[int, int]]] = {g: [] for g in self.group_names}
        for pair, gid in sorted(self.map.items()):
            out[gid].append(pair)
        return {g: tuple(v) for g, v in out.items()}

    @property
    def num_groups(self) -> int:
        return len(self.group_names)

    @property
    def is_identity(self) -> bool:
        return all(len(m) == 1 for m in self.members.values())

    def specialize(self, gid: int, sid: int) -> int | None:
        """Return the pid of ``sid`` that belongs to group ``gid``, or None.

        Raises SpecError when the group holds two parts of the same scene class,
        since the choice would then be ambiguous.
        """
        hits = [pid for s, pid in self.members.get(gid, ()) if s == sid]
        if len(hits) > 1:
            raise SpecError(
                f"grouping {self.name!r}: group {gid} has {len(hits)} members for sid {sid}"
            )
        return hits[0] if hits else None


@dataclass(frozen=True)
class Membership:
    sid: int
    kind: str | None
    has_parts: bool
    parts: tuple[PartClass, ...]

    @property
    def is_void(self) -> bool:
        return self.sid == VOID


@dataclass(frozen=True, eq=False)
class DatasetSpec:
    name: str
    scene_classes: tuple[SceneClass, ...]
    groupings: tuple[PartGrouping, ...] = ()
    version: str = ""
    crowd_iid: int = -1

    def __post_init__(self) -> None:
        _validate(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DatasetSpec):
            return NotImplemented
        return to_dict(self) == to_dict(other)

    def __hash__(self) -> int:
        return hash((self.name, self.scene_classes))

    @cached_property
    def by_sid(self) -> dict[int, SceneClass]:
        return {c.sid: c for c in self.scene_classes}

    def __getitem__(self, sid: int) -> SceneClass:
        try:
            return self.by_sid[sid]
        except KeyError:
            raise KeyError(f"unknown sid {sid} in spec {self.name!r}") from None

    def sid_of(self, name: str) -> int:
        for c in self.scene_classes:
            if c.name == name:
                return c.sid
        raise KeyError(f"no scene class named {name!r}")

    def pid_of(self, sid: int, name: str) -> int:
        for p in self[sid].parts:
            if p.name == name:
                return p.pid
        raise KeyError(f"class {sid} has no part named {name!r}")

    @property
    def stuff(self) -> list[int]:
        return [c.sid for c in self.scene_classes if not c.is_things]

    @property
    def things(self) -> list[int]:
        return [c.sid for c in self.scene_classes if c.is_things]

    @property
    def with_parts(self) -> list[int]:
        return [c.sid for c in self.scene_classes if c.has_parts]

    @property
    def without_parts(self) -> list[int]:
        return [c.sid for c in self.scene_classes if not c.has_parts]

    @property
    def evaluated(self) -> list[int]:
        return [c.sid for c in self.scene_classes if c.evaluate]

    @property
    def all_parts(self) -> list[tuple[int, int]]:
        return [(c.sid, p.pid) for c in self.scene_classes for p in c.parts]

    @property
    def max_sid(self) -> int:
        return max(c.sid for c in self.scene_classes)

    @property
    def max_pid(self) -> int:
        return max((p.pid for c in self.scene_classes for p in c.parts), default=0)

    def grouping(self, name: str) -> PartGrouping:
        if name == "identity" and not any(g.name == name for g in self.groupings):
            return identity_grouping(self)
        for g in self.groupings:
            if g.name == name:
                return g
        known = ", ".join(g.name for g in self.groupings) or "none"
        raise KeyError(f"spec {self.name!r} has no grouping {name!r} (known: {known}, identity)")


def membership(spec: DatasetSpec, sid: int) -> Membership:
    """Subset memberships of ``sid``; sid 0 reports void."""
    if sid == VOID:
        return Membership(VOID, None, False, ())
    c = spec[sid]
    return Membership(c.sid, c.kind, c.has_parts, c.parts)


def identity_grouping(spec: DatasetSpec) -> PartGrouping:
    mapping: dict[tuple[int, int], int] = {}
    names: dict[int, str] = {}
    for c in spec.scene_classes:
        for p in c.parts:
            gid = len(mapping) + 1
            mapping[(c.sid, p.pid)] = gid
            names[gid] = f"{c.name}-{p.name}"
    return PartGrouping("identity", mapping, names)


def _validate(spec: DatasetSpec) -> None:
    if not spec.scene_classes:
        raise SpecError("spec must define at least one scene class")
    seen: set[int] = set()
    for c in spec.scene_classes:
        if not isinstance(c.sid, int) or c.sid < 1:
            raise SpecError(f"scene_classes: sid {c.sid!r} must be an integer >= 1 (0 is void)")
        if c.sid in seen:
            raise SpecError(f"scene_classes: duplicate sid {c.sid}")
        seen.add(c.sid)
        if c.kind not in (STUFF, THINGS):
            raise SpecError(f"scene_classes: sid {c.sid} has kind {c.kind!r}, expected stuff or things")
        pids: set[int] = set()
        names: set[str] = set()
        for p in c.parts:
            if not isinstance(p.pid, int) or p.pid < 1:
                raise SpecError(f"sid {c.sid}: pid {p.pid!r} must be an integer >= 1 (0 is part-void)")
            if p.pid in pids:
                raise SpecError(f"sid {c.sid}: duplicate pid {p.pid}")
            if p.name in names:
                raise SpecError(f"sid {c.sid}: duplicate part name {p.name!r}")
            pids.add(p.pid)
            names.add(p.name)
    domain = {(c.sid, p.pid) for c in spec.scene_classes for p in c.parts}
    for g in spec.groupings:
        missing = sorted(domain - set(g.map))
        if missing:
            raise SpecError(f"grouping {g.name!r} is not total: missing {missing[:5]}")
        extra = sorted(set(g.map) - domain)
        if extra:
            raise SpecError(f"grouping {g.name!r} maps undefined pairs {extra[:5]}")
        gids = sorted(g.group_names)
        if gids != list(range(1, len(gids) + 1)):
            raise SpecError(f"grouping {g.name!r}: gids must be contiguous from 1, got {gids}")
        used = set(g.map.values())
        if used != set(gids):
            raise SpecError(f"grouping {g.name!r}: gids without members {sorted(set(gids) - used)}")


def from_dict(doc: Mapping[str, Any]) -> DatasetSpec:
    try:
        classes = tuple(
            SceneClass(
                sid=c["sid"],
                name=c["name"],
                kind=c["kind"],
                evaluate=c.get("evaluate", True),
                parts=tuple(PartClass(p["pid"], p["name"]) for p in c.get("parts", [])),
            )
            for c in doc["scene_classes"]
        )
        groupings = []
        for g in doc.get("groupings", []):
            mapping: dict[tuple[int, int], int] = {}
            names: dict[int, str] = {}
            for grp in g["groups"]:
                gid = grp["gid"]
                if gid in names:
                    raise SpecError(f"grouping {g['name']!r}: duplicate gid {gid}")
                names[gid] = grp["name"]
                for sid, pid in grp["members"]:
                    if (sid, pid) in mapping:
                        raise SpecError(f"grouping {g['name']!r}: pair ({sid}, {pid}) in two groups")
                    mapping[(sid, pid)] = gid
            groupings.append(PartGrouping(g["name"], mapping, names))
        return DatasetSpec(
            name=doc["name"],
            scene_classes=classes,
            groupings=tuple(groupings),
            version=doc.get("version", ""),
        )
    except (KeyError, TypeError) as e:
        raise SpecError(f"malformed spec document: missing or invalid field {e}") from e


def to_dict(spec: DatasetSpec) -> dict[str, Any]:
    return {
        "name": spec.name,
        "version": spec.version,
        "scene_classes": [
            {
                "sid": c.sid,
                "name": c.name,
                "kind": c.kind,
                "evaluate": c.evaluate,
                "parts": [{"pid": p.pid, "name": p.name} for p in c.parts],
            }
            for c in spec.scene_classes
        ],
        "groupings": [
            {
                "name": g.name,
                "groups": [
                    {"gid": gid, "name": g.group_names[gid], "members": [list(m) for m in g.members[gid]]}
                    for gid in sorted(g.group_names)
                ],
            }
            for g in spec.groupings
        ],
    }


def load_spec(text: str) -> DatasetSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"spec document is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SpecError("spec document must be a JSON object")
    return from_dict(doc)


def dump_spec(spec: DatasetSpec) -> str:
    return json.dumps(to_dict(spec), indent=1)


BUILTIN = {"cpp": "cpp.json", "ppp": "ppp.json"}


def builtin_spec(name: str) -> DatasetSpec:
    """Load one of the shipped specs (``cpp`` or ``ppp``)."""
    try:
        fname = BUILTIN[name]
    except KeyError:
        raise KeyError(f"no builtin spec {name!r}; choose from {sorted(BUILTIN)}") from None
    return load_spec(resources.files("partpq.data").joinpath(fname).read_text())


def resolve_spec(path_or_name: str | Path) -> DatasetSpec:
    if str(path_or_name) in BUILTIN:
        return builtin_spec(str(path_or_name))
    return load_spec(Path(path_or_name).read_text())


def make_spec(name: str, classes: Iterable[tuple], groupings: Iterable[PartGrouping] = ()) -> DatasetSpec:
    """Build a spec from ``(sid, name, kind, [part names], evaluate=True)`` tuples."""
    out = []
    for c in classes:
        sid, cname, kind, parts, *rest = c
        out.append(
            SceneClass(
                sid,
                cname,
                kind,
                tuple(PartClass(i, p) for i, p in enumerate(parts, 1)),
                rest[0] if rest else True,
            )
        )
    return DatasetSpec(name, tuple(out), tuple(groupings))
