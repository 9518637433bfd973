"""Packets, flows, events and traces shared by every engine."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, NamedTuple, Union

FRESH_ADDRESS = "?addr"
FRESH_PORT = "?port"
FRESH_CONTENT = "?content"

PACKET_FIELDS = ("src", "dst", "src_port", "dst_port", "origin", "content")
ADDRESS_FIELDS = ("src", "dst", "origin")
PORT_FIELDS = ("src_port", "dst_port")


@dataclass(frozen=True)
class Universe:
    """Finite value universes for each symbolic sort.

    Each sort also has one reserved fresh value (``FRESH_*``) standing for
    a value outside the declared set; it is never emitted by hosts.
    """

    addresses: tuple[str, ...]
    ports: tuple[str, ...]
    contents: tuple[str, ...] = ("c0",)

    def __post_init__(self):
        for name in ("addresses", "ports", "contents"):
            vals = getattr(self, name)
            if len(set(vals)) != len(vals):
                raise ValueError(f"duplicate values in universe {name}")

    def sort_values(self, sort: str, fresh: bool = False) -> tuple[str, ...]:
        base = {"Address": self.addresses, "Port": self.ports, "Content": self.contents}[sort]
        if fresh:
            extra = {"Address": FRESH_ADDRESS, "Port": FRESH_PORT, "Content": FRESH_CONTENT}[sort]
            return base + (extra,)
        return base

    def restrict(self, addresses) -> Universe:
        keep = set(addresses)
        return replace(self, addresses=tuple(a for a in self.addresses if a in keep))


@dataclass(frozen=True, order=True)
class Packet:
    src: str
    dst: str
    src_port: str
    dst_port: str
    origin: str = ""
    content: str = ""
    classes: frozenset = frozenset()

    def __post_init__(self):
        if not self.origin:
            object.__setattr__(self, "origin", self.src)
        object.__setattr__(self, "_hash", hash((self.src, self.dst, self.src_port, self.dst_port,
                                                self.origin, self.content, self.classes)))

    def __hash__(self):
        return self._hash

    def with_fields(self, **kw) -> Packet:
        return replace(self, **kw) if kw else self

    def to_json(self) -> dict:
        d = {f: getattr(self, f) for f in PACKET_FIELDS}
        if self.classes:
            d["classes"] = sorted(self.classes)
        return d

    @classmethod
    def from_json(cls, d: dict) -> Packet:
        return cls(
            src=str(d["src"]), dst=str(d["dst"]),
            src_port=str(d["src_port"]), dst_port=str(d["dst_port"]),
            origin=str(d.get("origin", d["src"])), content=str(d.get("content", "")),
            classes=frozenset(d.get("classes", ())),
        )


def reverse(p: Packet) -> Packet:
    """The reply-direction packet: endpoints and ports swapped."""
    return replace(p, src=p.dst, dst=p.src, src_port=p.dst_port, dst_port=p.src_port)


class FlowId(NamedTuple):
    """Unordered endpoint pair, stored in canonical (sorted) order."""

    lo: tuple[str, str]
    hi: tuple[str, str]

    def __repr__(self):
        return f"flow({self.lo[0]}:{self.lo[1]}<->{self.hi[0]}:{self.hi[1]})"

    @property
    def addresses(self) -> frozenset:
        return frozenset((self.lo[0], self.hi[0]))


def make_flow(a: tuple[str, str], b: tuple[str, str]) -> FlowId:
    return FlowId(a, b) if a <= b else FlowId(b, a)


def flow_of(p: Packet) -> FlowId:
    return make_flow((p.src, p.src_port), (p.dst, p.dst_port))


class NodeKind:
    HOST = "host"
    MIDDLEBOX = "middlebox"
    OMEGA = "omega"
    SWITCH = "switch"


OMEGA = "Ω"

Link = tuple  # (from NodeId, to NodeId)


# -- events ------------------------------------------------------------------

@dataclass(frozen=True)
class HostEmit:
    """``host`` sends a fresh packet; ``to`` is the resolved next hop (None = blackholed)."""

    t: int
    host: str
    packet: Packet
    to: str | None

    kind = "emit"


@dataclass(frozen=True)
class Recv:
    """``at`` receives ``packet`` from ``frm`` and processes it in the same step.

    ``sent`` lists the packets the receiver put on the wire in response, each
    with its resolved next hop. ``path`` is the ordered list of middleboxes
    the packet traversed before arriving.
    """

    t: int
    at: str
    frm: str
    packet: Packet
    sent: tuple = ()
    path: tuple = ()

    kind = "recv"


@dataclass(frozen=True)
class Fail:
    t: int
    node: str

    kind = "fail"


@dataclass(frozen=True)
class Recover:
    t: int
    node: str

    kind = "recover"


Event = Union[HostEmit, Recv, Fail, Recover]


def sends_of(ev: Event) -> list[tuple[str, str, Packet]]:
    """(from, to, packet) for every packet put on a link by ``ev``."""
    if isinstance(ev, HostEmit):
        return [] if ev.to is None else [(ev.host, ev.to, ev.packet)]
    if isinstance(ev, Recv):
        return [(ev.at, to, q) for q, to in ev.sent if to is not None]
    return []


@dataclass(frozen=True)
class Trace:
    events: tuple = ()
    # registers[i] = {instance id: MbxState} after events[i]
    registers: tuple = ()
    # oracle/classification bindings: key -> value, see bmc.OracleTable
    bindings: tuple = ()

    def __len__(self):
        return len(self.events)

    def prefix(self, n: int) -> Trace:
        return Trace(self.events[:n], self.registers[:n], self.bindings)

    @property
    def failures(self) -> list[Fail]:
        return [e for e in self.events if isinstance(e, Fail)]


@dataclass(frozen=True)
class FailureScenario:
    failed: frozenset = frozenset()
    max_failures: int = 0

    @property
    def key(self) -> str:
        return scenario_key(self.failed)


def scenario_key(failed) -> str:
    return ",".join(sorted(failed)) if failed else "default"


# -- well-formedness --------------------------------------------------------

def validate_trace(t: Trace, net: Any) -> list[str]:
    """Return a description of every well-formedness violation in ``t``.

    ``net`` must provide ``universe``, ``address_of(host)`` (None for
    non-hosts), ``middlebox_ids`` and ``route(node, dst, failed)``.
    """
    problems: list[str] = []
    queues: dict[tuple, list[Packet]] = {}
    failed: set[str] = set()
    u = net.universe
    addr_ok = set(u.addresses) | {FRESH_ADDRESS}
    port_ok = set(u.ports) | {FRESH_PORT}
    content_ok = set(u.contents) | {FRESH_CONTENT}

    def in_universe(p: Packet) -> bool:
        return (all(getattr(p, f) in addr_ok for f in ADDRESS_FIELDS)
                and all(getattr(p, f) in port_ok for f in PORT_FIELDS)
                and p.content in content_ok)

    def check_route(ev_t, frm, q, to):
        expected = net.route(frm, q.dst, frozenset(failed))
        if expected != to:
            problems.append(f"misrouted send {frm}->{to} (expected {expected}) @{ev_t}")

    for i, ev in enumerate(t.events):
        if ev.t != i:
            problems.append(f"timestep {ev.t} at position {i}")
        if isinstance(ev, HostEmit):
            addr = net.address_of(ev.host)
            p = ev.packet
            if addr is None:
                problems.append(f"emit from non-host {ev.host} @{ev.t}")
            elif p.src != addr or p.origin != addr:
                problems.append(f"malformed emit (src/origin != {addr}) @{ev.t}")
            if p.src == p.dst:
                problems.append(f"emit with src == dst @{ev.t}")
            if not (p.dst in u.addresses and p.src_port in u.ports
                    and p.dst_port in u.ports and p.content in u.contents):
                problems.append(f"emit outside universe @{ev.t}")
            check_route(ev.t, ev.host, p, ev.to)
        elif isinstance(ev, Recv):
            q = queues.get((ev.frm, ev.at))
            if not q or ev.packet not in q:
                problems.append(f"recv without prior send @{ev.t}")
            elif q[0] != ev.packet:
                problems.append(f"FIFO violation on {ev.frm}->{ev.at} @{ev.t}")
                q.remove(ev.packet)
            else:
                q.pop(0)
            for out, to in ev.sent:
                if not in_universe(out):
                    problems.append(f"sent packet outside universe @{ev.t}")
                check_route(ev.t, ev.at, out, to)
        elif isinstance(ev, Fail):
            if ev.node not in net.middlebox_ids:
                problems.append(f"fail of non-middlebox {ev.node} @{ev.t}")
            if ev.node in failed:
                problems.append(f"fail of already-failed {ev.node} @{ev.t}")
            failed.add(ev.node)
        elif isinstance(ev, Recover):
            if ev.node not in failed:
                problems.append(f"recover of non-failed {ev.node} @{ev.t}")
            failed.discard(ev.node)
        for frm, to, q in sends_of(ev):
            queues.setdefault((frm, to), []).append(q)
    return problems

