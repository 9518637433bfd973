"""Explicit-state bounded model checking over event schedules."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from .core import FlowId, Fail, HostEmit, Packet, Recover, Recv, Trace, Universe, flow_of
from .invariants import DeliveryCtx, Holds, Invariant, Unknown, Verdict, Violated, negate
from .mbx import fail_state, initial_state, recover_state, step


@dataclass(frozen=True)
class Bounds:
    depth: int = 8
    max_emits: int | None = None  # defaults to depth
    universe: Universe | None = None  # defaults to the network's
    budget: int | None = None  # defaults to the invariant's max_failures
    allow_recovery: bool = False
    failable: frozenset | None = None  # middleboxes the failure oracle may pick; None = all
    node_cap: int = 500_000

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")


class TraceDiverges(Exception):
    def __init__(self, step_index: int, why: str):
        super().__init__(f"trace diverges at step {step_index}: {why}")
        self.step = step_index


class _NeedChoice(Exception):
    def __init__(self, key, options):
        self.key = key
        self.options = options


class _CapReached(Exception):
    pass


def class_key(name: str, fl: FlowId):
    return ("class", name, fl)


def fn_key(inst: str, fn: str, args: tuple):
    return ("fn", inst, fn, args)


class BindingOracle:
    """Oracle answering from a binding table.

    With ``strict`` unset, an unbound call raises a choice request so the
    search can branch; with ``strict`` set it raises TraceDiverges.
    """

    def __init__(self, bindings: dict, excludes: dict, strict: bool = False):
        self.bindings = bindings
        self.excludes = excludes
        self.strict = strict

    def _missing(self, key, options):
        if self.strict:
            raise TraceDiverges(-1, f"no recorded value for {key!r}")
        raise _NeedChoice(key, options)

    def class_bit(self, name: str, packet: Packet) -> bool:
        fl = flow_of(packet)
        key = class_key(name, fl)
        if key in self.bindings:
            return self.bindings[key]
        blocked = any(self.bindings.get(class_key(o, fl)) for o in self.excludes.get(name, ()))
        self._missing(key, (False,) if blocked else (False, True))

    def value(self, inst_id, fn, args, options, distinct):
        key = fn_key(inst_id, fn, args)
        if key in self.bindings:
            return self.bindings[key]
        if distinct:
            used = {v for k, v in self.bindings.items() if k[0] == "fn" and k[1:3] == (inst_id, fn)}
            options = tuple(o for o in options if o not in used)
        self._missing(key, options)


def _excludes(net) -> dict:
    ex: dict = {}
    for m in net.middleboxes:
        for g in m.model.exclusion_groups():
            a, b = sorted(g)
            ex.setdefault(a, set()).add(b)
            ex.setdefault(b, set()).add(a)
    return ex


def emit_packets(net, host: str, universe: Universe) -> list[Packet]:
    """Every well-formed packet ``host`` may emit, in canonical order."""
    me = net.address_of(host)
    return sorted(
        Packet(me, dst, sp, dp, me, c)
        for dst in universe.addresses if dst != me
        for sp in universe.ports for dp in universe.ports for c in universe.contents
    )


def process(net, at: str, packet: Packet, states: dict, failed, bindings: dict, excludes: dict,
            universe: Universe):
    """Yield ``(new_state_or_None, outputs, bindings)`` for every oracle
    resolution of ``at`` processing ``packet``."""
    inst = net.instance(at)
    if inst is None:  # hosts consume
        yield None, (), bindings
        return
    st = states[at]
    pending = [bindings]
    while pending:
        bd = pending.pop()
        try:
            res = step(inst, st, packet, BindingOracle(bd, excludes), universe)
        except _NeedChoice as nc:
            for v in reversed(nc.options):
                nb = dict(bd)
                nb[nc.key] = v
                pending.append(nb)
            continue
        yield res.state, res.outputs, bd


class _Explorer:
    def __init__(self, net, inv: Invariant, b: Bounds):
        self.net = net
        self.inv = inv
        self.cond = negate(inv)
        self.b = b
        self.K = b.depth
        self.max_emits = b.depth if b.max_emits is None else b.max_emits
        self.universe = b.universe or net.universe
        self.budget = inv.max_failures if b.budget is None else b.budget
        mbs = sorted(net.middlebox_ids)
        self.failable = [m for m in mbs if b.failable is None or m in b.failable]
        self.mb_order = [m.id for m in net.middleboxes]
        self.types = {m.id: m.type_name for m in net.middleboxes}
        self.excludes = _excludes(net)
        self.packets = {h: emit_packets(net, h, self.universe) for h in net.host_ids}
        self.visited: dict = {}
        self.nodes = 0
        self.events: list = []
        self.snapshots: list = []
        self.bindings_at: list = []

    def key(self, states, queues, failed, emits, binds, tflows):
        return (tuple(states[m] for m in self.mb_order), queues, failed, emits,
                frozenset(binds.items()), tflows)

    def run(self) -> Verdict:
        states = {m.id: initial_state(m.model) for m in self.net.middleboxes}
        try:
            found = self.dfs(states, (), frozenset(), 0, {}, frozenset(), 0)
        except _CapReached:
            return Unknown(f"node cap {self.b.node_cap} reached")
        if found is not None:
            return Violated(found)
        return Holds(self.b)

    def _trace(self, binds) -> Trace:
        return Trace(tuple(self.events), tuple(self.snapshots),
                     tuple(sorted(binds.items(), key=repr)))

    def _snap(self, states):
        return tuple((m, states[m]) for m in self.mb_order)

    def dfs(self, states, queues, failed, emits, binds, tflows, t):
        if t >= self.K:
            return None
        k = self.key(states, queues, failed, emits, binds, tflows)
        rem = self.K - t
        if self.visited.get(k, -1) >= rem:
            return None
        self.visited[k] = rem
        self.nodes += 1
        if self.nodes > self.b.node_cap:
            raise _CapReached
        qmap = dict(queues)

        # deliveries, links in sorted order
        for link, q in queues:
            frm, at = link
            pkt, path = q[0]
            rest = dict(qmap)
            if len(q) == 1:
                del rest[link]
            else:
                rest[link] = q[1:]
            for new_st, outs, nb in process(self.net, at, pkt, states, failed, binds,
                                            self.excludes, self.universe):
                sent = tuple((o, self.net.route(at, o.dst, failed)) for o in outs)
                ev = Recv(t, at, frm, pkt, sent, path)
                st2 = states if new_st is None else {**states, at: new_st}
                self._push(ev, st2, nb)
                if self.cond.matches(at, pkt, DeliveryCtx(tflows, path, self.types)):
                    tr = self._trace(nb)
                    self._pop()
                    return tr
                q2 = dict(rest)
                npath = path + (at,)
                for o, to in sent:
                    if to is not None:
                        q2[(at, to)] = q2.get((at, to), ()) + ((o, npath),)
                tf2 = tflows
                if at == self.inv.target and sent:
                    tf2 = tflows | {flow_of(o) for o, _ in sent}
                r = self.dfs(st2, tuple(sorted(q2.items())), failed, emits, nb, tf2, t + 1)
                self._pop()
                if r is not None:
                    return r

        # host emissions
        if emits < self.max_emits:
            for h in self.net.host_ids:
                for p in self.packets[h]:
                    to = self.net.route(h, p.dst, failed)
                    ev = HostEmit(t, h, p, to)
                    q2 = dict(qmap)
                    if to is not None:
                        q2[(h, to)] = q2.get((h, to), ()) + ((p, ()),)
                    tf2 = tflows | {flow_of(p)} if h == self.inv.target else tflows
                    self._push(ev, states, binds)
                    r = self.dfs(states, tuple(sorted(q2.items())), failed, emits + 1, binds, tf2, t + 1)
                    self._pop()
                    if r is not None:
                        return r

        # failures, then recoveries
        if len(failed) < self.budget:
            for m in self.failable:
                if m in failed:
                    continue
                st2 = {**states, m: fail_state(self.net.instance(m).model)}
                self._push(Fail(t, m), st2, binds)
                r = self.dfs(st2, queues, failed | {m}, emits, binds, tflows, t + 1)
                self._pop()
                if r is not None:
                    return r
        if self.b.allow_recovery:
            for m in sorted(failed):
                st2 = {**states, m: recover_state(states[m])}
                self._push(Recover(t, m), st2, binds)
                r = self.dfs(st2, queues, failed - {m}, emits, binds, tflows, t + 1)
                self._pop()
                if r is not None:
                    return r
        return None

    def _push(self, ev, states, binds):
        self.events.append(ev)
        self.snapshots.append(self._snap(states))
        self.bindings_at.append(binds)

    def _pop(self):
        self.events.pop()
        self.snapshots.pop()
        self.bindings_at.pop()


def explore(net, inv: Invariant, b: Bounds = Bounds()) -> Verdict:
    """Search all schedules within ``b`` for a violation of ``inv``."""
    return _Explorer(net, inv, b).run()


def explore_stats(net, inv: Invariant, b: Bounds = Bounds()) -> tuple[Verdict, int]:
    ex = _Explorer(net, inv, b)
    v = ex.run()
    return v, ex.nodes


# -- replay -----------------------------------------------------------------

def replay(net, trace: Trace, inv: Invariant, universe: Universe | None = None) -> bool:
    """Re-execute ``trace`` with its recorded oracle bindings.

    Returns whether the final event is a Recv satisfying the negated
    invariant. Raises TraceDiverges on any disagreement with the models.
    """
    if not trace.events:
        raise ValueError("cannot replay an empty trace")
    universe = universe or net.universe
    binds = dict(trace.bindings)
    excludes = _excludes(net)
    cond = negate(inv)
    types = {m.id: m.type_name for m in net.middleboxes}
    states = {m.id: initial_state(m.model) for m in net.middleboxes}
    queues: dict = {}
    failed: set = set()
    tflows: set = set()
    last = False
    for i, ev in enumerate(trace.events):
        if ev.t != i:
            raise TraceDiverges(i, "timestep out of order")
        last = False
        if ev.kind == "emit":
            to = net.route(ev.host, ev.packet.dst, frozenset(failed))
            if to != ev.to:
                raise TraceDiverges(i, f"emit routed to {ev.to}, expected {to}")
            if to is not None:
                queues.setdefault((ev.host, to), []).append((ev.packet, ()))
            if ev.host == inv.target:
                tflows.add(flow_of(ev.packet))
        elif ev.kind == "recv":
            q = queues.get((ev.frm, ev.at))
            if not q or q[0][0] != ev.packet:
                raise TraceDiverges(i, f"packet is not at the head of {ev.frm}->{ev.at}")
            _, path = q.pop(0)
            inst = net.instance(ev.at)
            outs = ()
            if inst is not None:
                try:
                    res = step(inst, states[ev.at], ev.packet, BindingOracle(binds, excludes, strict=True),
                               universe)
                except TraceDiverges as e:
                    raise TraceDiverges(i, str(e)) from None
                states[ev.at] = res.state
                outs = res.outputs
            sent = tuple((o, net.route(ev.at, o.dst, frozenset(failed))) for o in outs)
            if sent != tuple(ev.sent):
                raise TraceDiverges(i, f"outputs {sent} differ from recorded {ev.sent}")
            last = cond.matches(ev.at, ev.packet, DeliveryCtx(frozenset(tflows), path, types))
            npath = path + (ev.at,)
            for o, to in sent:
                if to is not None:
                    queues.setdefault((ev.at, to), []).append((o, npath))
            if ev.at == inv.target:
                tflows.update(flow_of(o) for o in outs)
        elif ev.kind == "fail":
            if ev.node in failed or net.instance(ev.node) is None:
                raise TraceDiverges(i, f"cannot fail {ev.node}")
            failed.add(ev.node)
            states[ev.node] = fail_state(net.instance(ev.node).model)
        elif ev.kind == "recover":
            if ev.node not in failed:
                raise TraceDiverges(i, f"recover of non-failed {ev.node}")
            failed.discard(ev.node)
            states[ev.node] = recover_state(states[ev.node])
        if trace.registers and i < len(trace.registers):
            rec = dict(trace.registers[i])
            for m, st in rec.items():
                if states.get(m) != st:
                    raise TraceDiverges(i, f"register state of {m} differs")
    return last


# -- naive reference enumerator ----------------------------------------------

def naive_violations(net, inv: Invariant, b: Bounds) -> bool:
    """Brute force over raw event sequences with no pruning; used as a test oracle.

    Enumerates every sequence of at most ``depth`` choices in
    {emit(host, packet), deliver(link), fail(m), recover(m)} and every oracle
    resolution, checking each prefix with ``ViolationCondition.first_violation``.
    """
    universe = b.universe or net.universe
    K = b.depth
    max_emits = K if b.max_emits is None else b.max_emits
    budget = inv.max_failures if b.budget is None else b.budget
    excludes = _excludes(net)
    cond = negate(inv)
    hosts = list(net.host_ids)
    packets = {h: emit_packets(net, h, universe) for h in hosts}
    failable = sorted(m for m in net.middlebox_ids if b.failable is None or m in b.failable)

    def rec(events, states, queues, failed, emits, binds):
        if cond.first_violation(Trace(tuple(events)), net) is not None:
            return True
        if len(events) == K:
            return False
        t = len(events)
        for link in sorted(k for k, v in queues.items() if v):
            frm, at = link
            (pkt, path), rest = queues[link][0], queues[link][1:]
            for new_st, outs, nb in process(net, at, pkt, states, failed, binds, excludes, universe):
                sent = tuple((o, net.route(at, o.dst, failed)) for o in outs)
                q2 = {**queues, link: rest}
                for o, to in sent:
                    if to is not None:
                        q2[(at, to)] = q2.get((at, to), ()) + ((o, path + (at,)),)
                st2 = states if new_st is None else {**states, at: new_st}
                if rec(events + [Recv(t, at, frm, pkt, sent, path)], st2, q2, failed, emits, nb):
                    return True
        if emits < max_emits:
            for h, p in itertools.chain.from_iterable(((h, p) for p in packets[h]) for h in hosts):
                to = net.route(h, p.dst, failed)
                q2 = dict(queues)
                if to is not None:
                    q2[(h, to)] = q2.get((h, to), ()) + ((p, ()),)
                if rec(events + [HostEmit(t, h, p, to)], states, q2, failed, emits + 1, binds):
                    return True
        if len(failed) < budget:
            for m in failable:
                if m not in failed:
                    st2 = {**states, m: fail_state(net.instance(m).model)}
                    if rec(events + [Fail(t, m)], st2, queues, failed | {m}, emits, binds):
                        return True
        if b.allow_recovery:
            for m in sorted(failed):
                st2 = {**states, m: recover_state(states[m])}
                if rec(events + [Recover(t, m)], st2, queues, failed - {m}, emits, binds):
                    return True
        return False

    states = {m.id: initial_state(m.model) for m in net.middleboxes}
    return rec([], states, {}, frozenset(), 0, {})


# -- JSON -------------------------------------------------------------------

def _enc(v):
    if isinstance(v, Packet):
        return {"packet": v.to_json()}
    if isinstance(v, FlowId):
        return {"flow": [list(v.lo), list(v.hi)]}
    if isinstance(v, tuple):
        return [_enc(x) for x in v]
    return v


def _dec(v):
    if isinstance(v, dict) and "packet" in v:
        return Packet.from_json(v["packet"])
    if isinstance(v, dict) and "flow" in v:
        lo, hi = v["flow"]
        return FlowId(tuple(lo), tuple(hi))
    if isinstance(v, list):
        return tuple(_dec(x) for x in v)
    return v


def trace_to_json(trace: Trace) -> dict:
    evs = []
    for e in trace.events:
        d = {"t": e.t, "kind": e.kind}
        if e.kind == "emit":
            d.update(host=e.host, to=e.to, packet=e.packet.to_json())
        elif e.kind == "recv":
            d.update(at=e.at, frm=e.frm, packet=e.packet.to_json(), path=list(e.path),
                     sent=[{"packet": o.to_json(), "to": to} for o, to in e.sent])
        else:
            d["node"] = e.node
        evs.append(d)
    return {"events": evs, "bindings": [{"key": _enc(k), "value": _enc(v)} for k, v in trace.bindings]}


def trace_from_json(d: dict) -> Trace:
    evs = []
    for e in d["events"]:
        k = e["kind"]
        if k == "emit":
            evs.append(HostEmit(e["t"], e["host"], Packet.from_json(e["packet"]), e["to"]))
        elif k == "recv":
            evs.append(Recv(e["t"], e["at"], e["frm"], Packet.from_json(e["packet"]),
                            tuple((Packet.from_json(s["packet"]), s["to"]) for s in e["sent"]),
                            tuple(e.get("path", ()))))
        elif k == "fail":
            evs.append(Fail(e["t"], e["node"]))
        elif k == "recover":
            evs.append(Recover(e["t"], e["node"]))
        else:
            raise ValueError(f"unknown event kind {k!r}")
    binds = tuple((_dec(b["key"]), _dec(b["value"])) for b in d.get("bindings", ()))
    return Trace(tuple(evs), (), binds)
