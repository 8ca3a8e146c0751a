"""Report containers and their JSON/CSV layouts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


def pct(x: float | None) -> float | None:
    """Display form used in tables: percent, one decimal."""
    return None if x is None else round(100.0 * x, 1)


@dataclass
class ClassScore:
    sid: int
    name: str
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    sum_iou: float
    defined: bool


@dataclass
class Aggregate:
    pq: float | None
    sq: float | None
    rq: float | None
    n: int


@dataclass
class MiouReport:
    per_class: dict[int, float | None]
    mean: float | None


@dataclass
class EvalReport:
    """Per-class and subset-averaged scores for one metric family.

    ``metric`` is ``"PartPQ"`` or ``"PQ"``; it decides the key prefix used
    when serialising (``partpq``/``partsq``/``partrq`` vs ``pq``/``sq``/``rq``).
    """

    metric: str
    classes: list[ClassScore]
    aggregates: dict[str, Aggregate]
    pq: "EvalReport | None" = None
    miou: MiouReport | None = None

    @property
    def keys(self) -> tuple[str, str, str]:
        p = "part" if self.metric == "PartPQ" else ""
        return f"{p}pq", f"{p}sq", f"{p}rq"

    def by_sid(self) -> dict[int, ClassScore]:
        return {c.sid: c for c in self.classes}

    def __getitem__(self, sid: int) -> ClassScore:
        return self.by_sid()[sid]

    def to_dict(self) -> dict[str, Any]:
        kq, ks, kr = self.keys
        doc: dict[str, Any] = {
            "metric": self.metric,
            "classes": [
                {
                    "sid": c.sid,
                    "name": c.name,
                    "defined": c.defined,
                    kq: c.pq,
                    ks: c.sq,
                    kr: c.rq,
                    "tp": c.tp,
                    "fp": c.fp,
                    "fn": c.fn,
                    "sum_iou": c.sum_iou,
                    "display": {kq: pct(c.pq), ks: pct(c.sq), kr: pct(c.rq)},
                }
                for c in self.classes
            ],
            "aggregates": {
                name: {
                    kq: a.pq,
                    ks: a.sq,
                    kr: a.rq,
                    "n": a.n,
                    "display": {kq: pct(a.pq), ks: pct(a.sq), kr: pct(a.rq)},
                }
                for name, a in self.aggregates.items()
            },
        }
        if self.pq is not None:
            doc["pq"] = self.pq.to_dict()
        if self.miou is not None:
            doc["miou"] = {
                "mean": self.miou.mean,
                "per_class": {str(k): v for k, v in self.miou.per_class.items()},
                "display": {"mean": pct(self.miou.mean)},
            }
        return doc

    def csv_rows(self) -> list[list[Any]]:
        kq, ks, kr = self.keys
        header = ["row", "sid", "name", kq, ks, kr, "tp", "fp", "fn"]
        if self.pq is not None:
            header += list(self.pq.keys)
        pq_by = self.pq.by_sid() if self.pq is not None else {}
        rows: list[list[Any]] = [header]
        for c in self.classes:
            row = ["class", c.sid, c.name, _d(c.pq, c.defined), _d(c.sq, c.defined), _d(c.rq, c.defined), c.tp, c.fp, c.fn]
            if self.pq is not None:
                o = pq_by[c.sid]
                row += [_d(o.pq, o.defined), _d(o.sq, o.defined), _d(o.rq, o.defined)]
            rows.append(row)
        for name, a in self.aggregates.items():
            row = ["aggregate", "", name, _d(a.pq), _d(a.sq), _d(a.rq), "", "", ""]
            if self.pq is not None:
                o = self.pq.aggregates[name]
                row += [_d(o.pq), _d(o.sq), _d(o.rq)]
            rows.append(row)
        return rows

    def table(self) -> str:
        """Aggregate table with All / P / NP columns."""
        names = ["All", "P", "NP"]
        lines = [f"{'':8s}" + "".join(f"{n:>8s}" for n in names)]
        lines.append(f"{self.metric:8s}" + "".join(f"{_fmt(self.aggregates[n].pq):>8s}" for n in names))
        if self.pq is not None:
            lines.append(f"{'PQ':8s}" + "".join(f"{_fmt(self.pq.aggregates[n].pq):>8s}" for n in names))
        return "\n".join(lines)


def _d(x: float | None, defined: bool = True) -> str:
    if x is None or not defined:
        return ""
    return f"{100.0 * x:.1f}"


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{100.0 * x:.1f}"


@dataclass
class SigReport:
    per_class: dict[int, float | None]
    msig: float | None
    names: dict[int, str] = field(default_factory=dict)
    mpa: dict[str, Any] | None = None
    miou: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "classes": [
                {"sid": sid, "name": self.names.get(sid, ""), "sig": v, "defined": v is not None}
                for sid, v in sorted(self.per_class.items())
            ],
            "msig": self.msig,
            "display": {"msig": None if self.msig is None else round(self.msig, 1)},
        }
        if self.mpa is not None:
            doc["mpa"] = self.mpa
        if self.miou is not None:
            doc["miou"] = self.miou
        return doc

    def csv_rows(self) -> list[list[Any]]:
        rows: list[list[Any]] = [["row", "sid", "name", "sig"]]
        for sid, v in sorted(self.per_class.items()):
            rows.append(["class", sid, self.names.get(sid, ""), "" if v is None else f"{v:.1f}"])
        rows.append(["aggregate", "", "mSIG", "" if self.msig is None else f"{self.msig:.1f}"])
        return rows
