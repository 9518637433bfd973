"""Isolation invariants, their violation conditions, and symmetry grouping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .core import Packet, Trace, flow_of


# -- predicates -----------------------------------------------------------

@dataclass(frozen=True)
class SrcEquals:
    address: str


@dataclass(frozen=True)
class OriginEquals:
    address: str


@dataclass(frozen=True)
class NoPriorOutboundFlow:
    """The target has not sent any packet of the delivered packet's flow."""


@dataclass(frozen=True)
class NotTraversed:
    via: str  # middlebox instance id or type name


@dataclass(frozen=True)
class PAnd:
    left: "Predicate"
    right: "Predicate"


@dataclass(frozen=True)
class POr:
    left: "Predicate"
    right: "Predicate"


@dataclass(frozen=True)
class PNot:
    inner: "Predicate"


Predicate = Union[SrcEquals, OriginEquals, NoPriorOutboundFlow, NotTraversed, PAnd, POr, PNot]


@dataclass(frozen=True)
class DeliveryCtx:
    """What a predicate may look at besides the delivered packet."""

    sent_flows: frozenset = frozenset()  # flows the target emitted earlier
    path: tuple = ()  # middleboxes the packet passed through
    types: dict = field(default_factory=dict, compare=False, hash=False)  # node -> type name


def evaluate(pred: Predicate, p: Packet, ctx: DeliveryCtx) -> bool:
    t = type(pred)
    if t is SrcEquals:
        return p.src == pred.address
    if t is OriginEquals:
        return p.origin == pred.address
    if t is NoPriorOutboundFlow:
        return flow_of(p) not in ctx.sent_flows
    if t is NotTraversed:
        return not any(n == pred.via or ctx.types.get(n) == pred.via for n in ctx.path)
    if t is PAnd:
        return evaluate(pred.left, p, ctx) and evaluate(pred.right, p, ctx)
    if t is POr:
        return evaluate(pred.left, p, ctx) or evaluate(pred.right, p, ctx)
    if t is PNot:
        return not evaluate(pred.inner, p, ctx)
    raise TypeError(pred)


def constants(pred: Predicate) -> set:
    """Address constants and traversal targets mentioned by ``pred``."""
    if isinstance(pred, (SrcEquals, OriginEquals)):
        return {pred.address}
    if isinstance(pred, NotTraversed):
        return {pred.via}
    if isinstance(pred, (PAnd, POr)):
        return constants(pred.left) | constants(pred.right)
    if isinstance(pred, PNot):
        return constants(pred.inner)
    return set()


def uses_flow_history(pred: Predicate) -> bool:
    if isinstance(pred, NoPriorOutboundFlow):
        return True
    if isinstance(pred, (PAnd, POr)):
        return uses_flow_history(pred.left) or uses_flow_history(pred.right)
    if isinstance(pred, PNot):
        return uses_flow_history(pred.inner)
    return False


def rename_predicate(pred: Predicate, amap: dict, nmap: dict) -> Predicate:
    if isinstance(pred, SrcEquals):
        return SrcEquals(amap.get(pred.address, pred.address))
    if isinstance(pred, OriginEquals):
        return OriginEquals(amap.get(pred.address, pred.address))
    if isinstance(pred, NotTraversed):
        return NotTraversed(nmap.get(pred.via, pred.via))
    if isinstance(pred, (PAnd, POr)):
        return type(pred)(rename_predicate(pred.left, amap, nmap), rename_predicate(pred.right, amap, nmap))
    if isinstance(pred, PNot):
        return PNot(rename_predicate(pred.inner, amap, nmap))
    return pred


def render(pred: Predicate, target: str = "d") -> str:
    if isinstance(pred, SrcEquals):
        return f"src(p) = {pred.address}"
    if isinstance(pred, OriginEquals):
        return f"origin(p) = {pred.address}"
    if isinstance(pred, NoPriorOutboundFlow):
        return f"¬◇∃p': snd({target}, _, p') ∧ flow(p') = flow(p)"
    if isinstance(pred, NotTraversed):
        return f"¬traversed(p, {pred.via})"
    if isinstance(pred, PAnd):
        return f"({render(pred.left, target)} ∧ {render(pred.right, target)})"
    if isinstance(pred, POr):
        return f"({render(pred.left, target)} ∨ {render(pred.right, target)})"
    return f"¬{render(pred.inner, target)}"


# -- invariants -----------------------------------------------------------

INVARIANT_TYPES = ("simple-isolation", "flow-isolation", "data-isolation", "traversal")


@dataclass(frozen=True)
class Invariant:
    """``target`` never receives a packet matching ``predicate`` while at most
    ``max_failures`` nodes are failed."""

    name: str
    target: str
    predicate: Predicate
    max_failures: int = 0
    type: str = "custom"

    def __post_init__(self):
        if self.max_failures < 0:
            raise ValueError("max_failures must be >= 0")

    @property
    def text(self) -> str:
        return f"∀n, p: □¬(rcv({self.target}, n, p) ∧ {render(self.predicate, self.target)})"

    def to_json(self) -> dict:
        d = {"name": self.name, "type": self.type, "target": self.target, "max_failures": self.max_failures}
        p = self.predicate
        if self.type == "simple-isolation":
            d["src"] = p.address
        elif self.type == "data-isolation":
            d["origin"] = p.address
        elif self.type == "flow-isolation":
            d["src"] = p.left.address
        elif self.type == "traversal":
            if isinstance(p, PAnd):
                d["src"], d["via"] = p.left.address, p.right.via
            else:
                d["via"] = p.via
        else:
            raise ValueError(f"{self.name}: custom predicates have no JSON form")
        return d

    def renamed(self, nodes: dict, addresses: dict, name: str | None = None) -> Invariant:
        return Invariant(name or self.name, nodes.get(self.target, self.target),
                         rename_predicate(self.predicate, addresses, nodes), self.max_failures, self.type)


def simple_isolation(name, target, src, max_failures=0) -> Invariant:
    return Invariant(name, target, SrcEquals(src), max_failures, "simple-isolation")


def flow_isolation(name, target, src, max_failures=0) -> Invariant:
    return Invariant(name, target, PAnd(SrcEquals(src), NoPriorOutboundFlow()), max_failures, "flow-isolation")


def data_isolation(name, target, origin, max_failures=0) -> Invariant:
    return Invariant(name, target, OriginEquals(origin), max_failures, "data-isolation")


def traversal(name, target, via, src=None, max_failures=0) -> Invariant:
    pred = NotTraversed(via) if src is None else PAnd(SrcEquals(src), NotTraversed(via))
    return Invariant(name, target, pred, max_failures, "traversal")


def invariant_from_json(d: dict, net=None) -> Invariant:
    """Build an invariant; host ids given for ``src``/``origin`` are mapped to addresses."""
    kind = d.get("type")
    if kind not in INVARIANT_TYPES:
        raise ValueError(f"unknown invariant type {kind!r}")

    def addr(v):
        if net is not None and net.address_of(v) is not None:
            return net.address_of(v)
        return v

    name, target, b = d["name"], d["target"], int(d.get("max_failures", 0))
    if kind == "simple-isolation":
        return simple_isolation(name, target, addr(d["src"]), b)
    if kind == "flow-isolation":
        return flow_isolation(name, target, addr(d["src"]), b)
    if kind == "data-isolation":
        return data_isolation(name, target, addr(d["origin"]), b)
    return traversal(name, target, d["via"], addr(d["src"]) if "src" in d else None, b)


INVARIANTS_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["name", "type", "target"],
        "properties": {
            "name": {"type": "string", "minLength": 1},
            "type": {"enum": list(INVARIANT_TYPES)},
            "target": {"type": "string"},
            "src": {"type": "string"},
            "origin": {"type": "string"},
            "via": {"type": "string"},
            "max_failures": {"type": "integer", "minimum": 0},
        },
        "allOf": [
            {"if": {"properties": {"type": {"enum": ["simple-isolation", "flow-isolation"]}}},
             "then": {"required": ["src"]}},
            {"if": {"properties": {"type": {"const": "data-isolation"}}}, "then": {"required": ["origin"]}},
            {"if": {"properties": {"type": {"const": "traversal"}}}, "then": {"required": ["via"]}},
        ],
        "additionalProperties": False,
    },
}


def invariants_from_json(data, net) -> list[Invariant]:
    """Validate and build invariants, rejecting duplicate names and unknown nodes."""
    import jsonschema

    from .network import NetworkError, _pointer

    try:
        jsonschema.validate(data, INVARIANTS_SCHEMA)
    except jsonschema.ValidationError as e:
        raise NetworkError(e.message, _pointer(e.absolute_path)) from None
    out, seen = [], set()
    for i, d in enumerate(data):
        if d["name"] in seen:
            raise NetworkError(f"duplicate invariant name {d['name']!r}", f"/{i}/name")
        seen.add(d["name"])
        inv = invariant_from_json(d, net)
        problems = validate_invariant(inv, net)
        if problems:
            raise NetworkError("; ".join(problems), f"/{i}")
        out.append(inv)
    return out


def load_invariants(path, net) -> list[Invariant]:
    import json
    from pathlib import Path

    from .network import NetworkError

    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise NetworkError(f"invalid JSON: {e}") from None
    return invariants_from_json(data, net)


def validate_invariant(inv: Invariant, net) -> list[str]:
    problems = []
    if inv.target not in net.node_ids:
        problems.append(f"{inv.name}: unknown target {inv.target!r}")
    types = {m.type_name for m in net.middleboxes}
    for c in constants(inv.predicate):
        if c not in net.universe.addresses and c not in net.middlebox_ids and c not in types:
            problems.append(f"{inv.name}: unknown constant {c!r}")
    return problems


def referenced_nodes(inv: Invariant, net=None) -> frozenset:
    """The target plus hosts owning predicate addresses (and named middlebox instances)."""
    out = {inv.target}
    for c in constants(inv.predicate):
        if net is None:
            continue
        if net.host_at(c) is not None:
            out.add(net.host_at(c))
        elif c in net.middlebox_ids:
            out.add(c)
    return frozenset(out)


# -- violation conditions -------------------------------------------------

@dataclass(frozen=True)
class ViolationCondition:
    """∃ a Recv at ``target`` of a packet matching ``predicate`` with at most
    ``budget`` failures active."""

    target: str
    predicate: Predicate
    budget: int
    name: str = ""

    def matches(self, at: str, p: Packet, ctx: DeliveryCtx) -> bool:
        return at == self.target and evaluate(self.predicate, p, ctx)

    def first_violation(self, trace: Trace, net=None) -> int | None:
        """Index of the first satisfying Recv in ``trace``, or None."""
        types = {m.id: m.type_name for m in net.middleboxes} if net is not None else {}
        sent: set = set()
        for i, e in enumerate(trace.events):
            if e.kind == "emit" and e.host == self.target:
                sent.add(flow_of(e.packet))
            elif e.kind == "recv":
                ctx = DeliveryCtx(frozenset(sent), tuple(e.path), types)
                if self.matches(e.at, e.packet, ctx):
                    return i
                if e.at == self.target:
                    sent.update(flow_of(q) for q, _ in e.sent)
        return None

    def satisfied_by(self, trace: Trace, net=None) -> bool:
        return self.first_violation(trace, net) is not None

    def negate(self) -> Invariant:
        return Invariant(self.name, self.target, self.predicate, self.budget)


def negate(inv: Invariant) -> ViolationCondition:
    return ViolationCondition(inv.target, inv.predicate, inv.max_failures, inv.name)


def violates(trace: Trace, inv: Invariant, net=None) -> bool:
    return negate(inv).satisfied_by(trace, net)


# -- verdicts -------------------------------------------------------------

@dataclass(frozen=True)
class Holds:
    bounds: object = None
    kind: str = "holds"

    def __str__(self):
        return "Holds (up to bounds)"


@dataclass(frozen=True)
class Violated:
    trace: Trace
    kind: str = "violated"

    def __str__(self):
        return f"Violated ({len(self.trace)} events)"


@dataclass(frozen=True)
class Unknown:
    reason: str
    kind: str = "unknown"

    def __str__(self):
        return f"Unknown: {self.reason}"


Verdict = Union[Holds, Violated, Unknown]


# -- symmetry -------------------------------------------------------------

@dataclass(frozen=True)
class SymmetryGroup:
    representative: Invariant
    members: tuple  # every invariant of the group, representative included
    bijections: tuple  # per member: ((rep node, member node), ...)

    @property
    def size(self) -> int:
        return len(self.members)


def _roles(inv: Invariant, net) -> tuple:
    """Referenced nodes in a canonical order: target first, then predicate hosts."""
    nodes = [inv.target]
    for c in sorted(constants(inv.predicate)):
        h = net.host_at(c) if net is not None else None
        n = h or c
        if n not in nodes:
            nodes.append(n)
    return tuple(nodes)


def _shape(pred: Predicate, roles: dict, net):
    """Predicate with node constants replaced by role indexes."""
    def role_of(addr):
        h = net.host_at(addr) if net is not None else None
        return ("@", roles.get(h or addr, addr))
    if isinstance(pred, SrcEquals):
        return ("src", role_of(pred.address))
    if isinstance(pred, OriginEquals):
        return ("origin", role_of(pred.address))
    if isinstance(pred, NotTraversed):
        return ("via", roles.get(pred.via, pred.via))
    if isinstance(pred, (PAnd, POr)):
        return (type(pred).__name__, _shape(pred.left, roles, net), _shape(pred.right, roles, net))
    if isinstance(pred, PNot):
        return ("not", _shape(pred.inner, roles, net))
    return (type(pred).__name__,)


def symmetry_key(inv: Invariant, partition, net=None):
    roles = _roles(inv, net)
    index = {n: i for i, n in enumerate(roles)}
    classes = tuple(partition.class_of(n) for n in roles)
    if hasattr(partition, "relation"):
        rel = tuple(partition.relation(a, b) for a in roles for b in roles if a != b)
    else:
        rel = ()
    return (inv.type, inv.max_failures, classes, _shape(inv.predicate, index, net), rel)


def symmetry_groups(invs, partition, net=None) -> list[SymmetryGroup]:
    """Group invariants equal up to a policy-class-preserving renaming of the
    nodes they reference. The lexicographically least name represents a group."""
    buckets: dict = {}
    for inv in invs:
        buckets.setdefault(symmetry_key(inv, partition, net), []).append(inv)
    groups = []
    for members in buckets.values():
        members.sort(key=lambda i: i.name)
        rep = members[0]
        rroles = _roles(rep, net)
        bij = tuple(tuple(zip(rroles, _roles(m, net))) for m in members)
        groups.append(SymmetryGroup(rep, tuple(members), bij))
    groups.sort(key=lambda g: g.representative.name)
    return groups
