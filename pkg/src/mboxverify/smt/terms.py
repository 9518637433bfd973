"""SMT-LIB2 term builders with light constant folding, and symbolic values.

Scalars of the Address/Port/Content sorts are encoded as integer indices
into a per-sort enumeration; -2 stands for a value outside it.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..core import PACKET_FIELDS, Packet, make_flow
from ..mbx import ast as A

TRUE, FALSE = "true", "false"
NONE_IDX = -2

FIELD_SORT = {"src": "Address", "dst": "Address", "origin": "Address",
              "src_port": "Port", "dst_port": "Port", "content": "Content"}


def num(i: int) -> str:
    return str(i) if i >= 0 else f"(- {-i})"


def _is_num(t: str) -> bool:
    return t.lstrip("-").isdigit() or (t.startswith("(- ") and t[3:-1].isdigit())


def _num_val(t: str) -> int:
    return -int(t[3:-1]) if t.startswith("(- ") else int(t)


def and_(*xs) -> str:
    out = []
    for x in xs:
        if x == FALSE:
            return FALSE
        if x != TRUE and x not in out:
            out.append(x)
    if not out:
        return TRUE
    return out[0] if len(out) == 1 else "(and " + " ".join(out) + ")"


def or_(*xs) -> str:
    out = []
    for x in xs:
        if x == TRUE:
            return TRUE
        if x != FALSE and x not in out:
            out.append(x)
    if not out:
        return FALSE
    return out[0] if len(out) == 1 else "(or " + " ".join(out) + ")"


def not_(x: str) -> str:
    if x == TRUE:
        return FALSE
    if x == FALSE:
        return TRUE
    return f"(not {x})"


def implies(a: str, b: str) -> str:
    if a == FALSE or b == TRUE:
        return TRUE
    if a == TRUE:
        return b
    return f"(=> {a} {b})"


def eq_int(a: str, b: str) -> str:
    if a == b:
        return TRUE
    if _is_num(a) and _is_num(b):
        return TRUE if _num_val(a) == _num_val(b) else FALSE
    return f"(= {a} {b})"


def iff(a: str, b: str) -> str:
    if a == b:
        return TRUE
    if b == TRUE:
        return a
    if b == FALSE:
        return not_(a)
    if a == TRUE:
        return b
    if a == FALSE:
        return not_(b)
    return f"(= {a} {b})"


def ite(c: str, a: str, b: str) -> str:
    if c == TRUE or a == b:
        return a
    if c == FALSE:
        return b
    return f"(ite {c} {a} {b})"


def count(bools, bound: int) -> str:
    """``sum(bools) <= bound`` over Bool terms."""
    bools = [b for b in bools if b != FALSE]
    if len(bools) <= bound:
        return TRUE
    if bound == 0:
        return and_(*(not_(b) for b in bools))
    return "(<= (+ " + " ".join(f"(ite {b} 1 0)" for b in bools) + f") {bound})"


# -- enumerations ------------------------------------------------------------------

class Enums:
    """Per-sort value enumerations; universe values come first."""

    def __init__(self, universe, extras: dict):
        self.values = {}
        for sort, base in (("Address", universe.addresses), ("Port", universe.ports),
                           ("Content", universe.contents)):
            more = sorted(set(extras.get(sort, ())) - set(base))
            self.values[sort] = tuple(base) + tuple(more)
        self.base = {"Address": len(universe.addresses), "Port": len(universe.ports),
                     "Content": len(universe.contents)}
        self._idx = {s: {v: i for i, v in enumerate(vals)} for s, vals in self.values.items()}

    def index(self, sort: str, v) -> int:
        return self._idx[sort].get(v, NONE_IDX)

    def value(self, sort: str, i: int):
        vals = self.values[sort]
        if 0 <= i < len(vals):
            return vals[i]
        raise IndexError(f"{sort} index {i} outside enumeration")

    def domain(self, sort) -> list:
        """Every concrete value of ``sort`` (scalars, tuples, flows)."""
        if isinstance(sort, A.TupleSort):
            out = [()]
            for s in sort.items:
                out = [o + (v,) for o in out for v in self.domain(s)]
            return out
        name = sort.name
        if name in self.values:
            return list(self.values[name])
        if name == "Flow":
            eps = [(a, p) for a in self.values["Address"] for p in self.values["Port"]]
            return sorted({make_flow(x, y) for x in eps for y in eps})
        raise ValueError(f"sort {name} has no finite enumeration")


# -- symbolic values -----------------------------------------------------------------

@dataclass(frozen=True)
class SInt:
    term: str
    sort: str


@dataclass(frozen=True)
class SLit:
    value: str


@dataclass(frozen=True)
class SFlow:
    a: tuple  # (SInt addr, SInt port)
    b: tuple


@dataclass(frozen=True)
class SPkt:
    fields: tuple  # SInt per PACKET_FIELDS

    def get(self, f: str) -> SInt:
        return self.fields[PACKET_FIELDS.index(f)]

    def with_fields(self, over: dict) -> SPkt:
        return SPkt(tuple(over.get(f, v) for f, v in zip(PACKET_FIELDS, self.fields)))


@dataclass(frozen=True)
class SBool:
    term: str


def flow_of_sym(p: SPkt) -> SFlow:
    return SFlow((p.get("src"), p.get("src_port")), (p.get("dst"), p.get("dst_port")))


def concrete(v, sort, en: Enums):
    """Symbolic constant for a concrete value of ``sort``."""
    if isinstance(sort, A.TupleSort):
        return tuple(concrete(x, s, en) for x, s in zip(v, sort.items))
    name = sort.name
    if name in en.values:
        return SInt(num(en.index(name, v)), name)
    if name == "Flow":
        ep = lambda e: (SInt(num(en.index("Address", e[0])), "Address"),  # noqa: E731
                        SInt(num(en.index("Port", e[1])), "Port"))
        return SFlow(ep(v.lo), ep(v.hi))
    if name == "Packet":
        return SPkt(tuple(SInt(num(en.index(FIELD_SORT[f], getattr(v, f))), FIELD_SORT[f])
                          for f in PACKET_FIELDS))
    raise ValueError(sort)


def flatten(v) -> list[str]:
    """Integer component terms of a symbolic value."""
    if isinstance(v, SInt):
        return [v.term]
    if isinstance(v, tuple):
        return [t for x in v for t in flatten(x)]
    if isinstance(v, SFlow):
        return [v.a[0].term, v.a[1].term, v.b[0].term, v.b[1].term]
    if isinstance(v, SPkt):
        return [f.term for f in v.fields]
    raise TypeError(v)


def width(sort) -> int:
    if isinstance(sort, A.TupleSort):
        return sum(width(s) for s in sort.items)
    return {"Flow": 4, "Packet": 6}.get(sort.name, 1)


def unflatten(terms: list[str], sort):
    it = iter(terms)

    def build(s):
        if isinstance(s, A.TupleSort):
            return tuple(build(x) for x in s.items)
        if s.name == "Flow":
            return SFlow((SInt(next(it), "Address"), SInt(next(it), "Port")),
                         (SInt(next(it), "Address"), SInt(next(it), "Port")))
        if s.name == "Packet":
            return SPkt(tuple(SInt(next(it), FIELD_SORT[f]) for f in PACKET_FIELDS))
        return SInt(next(it), s.name)
    return build(sort)


def decode_value(ints: list[int], sort, en: Enums):
    """Concrete value from solver integers (inverse of ``concrete``)."""
    it = iter(ints)

    def build(s):
        if isinstance(s, A.TupleSort):
            return tuple(build(x) for x in s.items)
        if s.name == "Flow":
            a = (en.value("Address", next(it)), en.value("Port", next(it)))
            b = (en.value("Address", next(it)), en.value("Port", next(it)))
            return make_flow(a, b)
        if s.name == "Packet":
            vals = {f: en.value(FIELD_SORT[f], next(it)) for f in PACKET_FIELDS}
            return Packet(**vals)
        return en.value(s.name, next(it))
    return build(sort)


def sym_eq(x, y, en: Enums) -> str:
    if isinstance(x, SLit) and isinstance(y, SLit):
        return TRUE if x.value == y.value else FALSE
    if isinstance(x, SLit):
        x, y = y, x
    if isinstance(y, SLit):
        if isinstance(x, SInt):
            i = en.index(x.sort, y.value)
            return FALSE if i == NONE_IDX else eq_int(x.term, num(i))
        raise TypeError(f"cannot compare {x!r} with a literal")
    if isinstance(x, SInt):
        return eq_int(x.term, y.term)
    if isinstance(x, SBool):
        return iff(x.term, y.term)
    if isinstance(x, tuple):
        return and_(*(sym_eq(a, b, en) for a, b in zip(x, y)))
    if isinstance(x, SFlow):
        ep = lambda e, f: and_(eq_int(e[0].term, f[0].term), eq_int(e[1].term, f[1].term))  # noqa: E731
        return or_(and_(ep(x.a, y.a), ep(x.b, y.b)), and_(ep(x.a, y.b), ep(x.b, y.a)))
    if isinstance(x, SPkt):
        return and_(*(eq_int(a.term, b.term) for a, b in zip(x.fields, y.fields)))
    raise TypeError(x)


def sym_ite(c: str, x, y):
    if c == TRUE:
        return x
    if c == FALSE:
        return y
    if isinstance(x, SInt):
        return SInt(ite(c, x.term, y.term), x.sort)
    if isinstance(x, SBool):
        return SBool(ite(c, x.term, y.term))
    if isinstance(x, tuple):
        return tuple(sym_ite(c, a, b) for a, b in zip(x, y))
    if isinstance(x, SFlow):
        return SFlow(tuple(sym_ite(c, a, b) for a, b in zip(x.a, y.a)),
                     tuple(sym_ite(c, a, b) for a, b in zip(x.b, y.b)))
    if isinstance(x, SPkt):
        return SPkt(tuple(sym_ite(c, a, b) for a, b in zip(x.fields, y.fields)))
    raise TypeError(x)
