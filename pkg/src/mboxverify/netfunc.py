"""Transfer functions: static switching collapsed into the Ω pseudo-node."""
from __future__ import annotations

from dataclasses import dataclass

from .core import OMEGA, FailureScenario, scenario_key
from .formula import FormulaTemplate


class StaticLoop(Exception):
    def __init__(self, nodes, dst):
        super().__init__(f"static forwarding loop for dst {dst}: {' -> '.join(nodes)}")
        self.nodes = tuple(nodes)
        self.dst = dst


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Map (egress node, dst address) to at most one host/middlebox ingress.

    An empty successor set is a blackhole.
    """

    key: str
    failed: frozenset
    succ: dict  # (node, dst) -> frozenset
    hosts: tuple  # ((host id, address), ...)
    middleboxes: frozenset
    addresses: tuple

    def successors(self, node: str, dst: str) -> frozenset:
        return self.succ.get((node, dst), frozenset())

    def next(self, node: str, dst: str) -> str | None:
        s = self.successors(node, dst)
        return next(iter(s)) if s else None

    @property
    def nodes(self) -> tuple:
        return tuple(h for h, _ in self.hosts) + tuple(sorted(self.middleboxes))

    def address_of(self, node):
        return dict(self.hosts).get(node)


def compute_transfer(topology, tables, scenario: FailureScenario = FailureScenario()) -> TransferFunction:
    table = tables.table(scenario.failed)
    switches = topology.switch_ids
    excluded = topology.excluded
    endpoints = topology.node_ids
    addresses = topology.universe.addresses
    memo: dict = {}

    def hop(n, a):
        nxt = table.get((n, a)) or table.get((n, "*"))
        if nxt is None and n not in switches:
            nb = topology.neighbors(n)
            if len(nb) == 1:
                nxt = nb[0]
        return nxt

    def through_switches(s, a):
        chain = []
        while True:
            if (s, a) in memo:
                res = memo[(s, a)]
                break
            if s in chain:
                raise StaticLoop(chain[chain.index(s):] + [s], a)
            chain.append(s)
            nxt = hop(s, a)
            if nxt is None or nxt in excluded:
                res = None
                break
            if nxt not in switches:
                res = nxt
                break
            s = nxt
        for c in chain:
            memo[(c, a)] = res
        return res

    succ = {}
    for x in endpoints:
        for a in addresses:
            nxt = hop(x, a)
            if nxt is not None and nxt in switches:
                nxt = through_switches(nxt, a)
            if nxt is None or nxt in excluded or nxt == x:
                succ[(x, a)] = frozenset()
            else:
                succ[(x, a)] = frozenset({nxt})
    key = scenario_key(scenario.failed)
    if key not in tables.scenario_keys:
        key = "default"
    return TransferFunction(
        key, frozenset(scenario.failed), succ,
        tuple((h.id, h.address) for h in topology.hosts),
        topology.middlebox_ids, tuple(addresses),
    )


# -- Ω axioms -------------------------------------------------------------

def _fail_prefix(scenario: FailureScenario) -> str:
    if not scenario.failed:
        return ""
    return " ∧ ".join(f"fail({x})" for x in sorted(scenario.failed)) + " ∧ "


def _scenario_sends(trace, net, key):
    """(from, to, packet) of every send made while the active table is ``key``."""
    failed: set = set()
    for e in trace.events:
        if e.kind == "fail":
            failed.add(e.node)
        elif e.kind == "recover":
            failed.discard(e.node)
        elif net.transfer(frozenset(failed)).key == key:
            if e.kind == "emit":
                yield e.host, e.to, e.packet
            elif e.kind == "recv":
                for pk, to in e.sent:
                    yield e.at, to, pk


def _egress_eval(tf: TransferFunction, x: str):
    def ev(trace, net):
        return all(to is None or to in tf.nodes
                   for frm, to, _ in _scenario_sends(trace, net, tf.key) if frm == x)
    return ev


def _omega_eval(tf: TransferFunction, a: str, ingress: str | None):
    def ev(trace, net):
        for frm, to, pk in _scenario_sends(trace, net, tf.key):
            if pk.dst == a and (ingress is None or frm == ingress):
                if (frozenset() if to is None else frozenset({to})) != tf.successors(frm, a):
                    return False
        return True
    return ev


def omega_axioms(tf: TransferFunction, scenario: FailureScenario = FailureScenario()) -> list[FormulaTemplate]:
    if not tf.nodes:
        return []
    pre = _fail_prefix(scenario)
    out = []
    for x in tf.nodes:
        kind = "host-egress" if tf.address_of(x) is not None else "mbox-egress"
        out.append(FormulaTemplate(
            f"egress[{x}]", kind, OMEGA,
            f"∀n, p: □ ({pre}snd({x}, n, p) ⇒ n = {OMEGA})",
            frozenset({x}), _egress_eval(tf, x)))
    for a in tf.addresses:
        # the owner of ``a`` never sends to itself
        by_ingress = {x: tf.successors(x, a) for x in tf.nodes if tf.address_of(x) != a}
        if not by_ingress:
            continue
        targets = set(by_ingress.values())
        if len(targets) == 1:
            (t,) = targets
            out.append(_dst_axiom(tf, a, None, t, pre))
        else:
            for x, t in by_ingress.items():
                out.append(_dst_axiom(tf, a, x, t, pre))
    return out


def _dst_axiom(tf, a, ingress, target: frozenset, pre) -> FormulaTemplate:
    cond = f"{pre}snd({OMEGA}, n, p) ∧ dst(p) = {a}"
    if ingress is not None:
        cond += f" ∧ ◇rcv({ingress}, {OMEGA}, p)"
    if target:
        (node,) = target
        concl = f"n = {node} ∧ ◇∃n': rcv(n', {OMEGA}, p)"
        syms = {a, node}
    else:
        concl = "⊥"
        syms = {a}
    if ingress is not None:
        syms.add(ingress)
    name = f"omega[{a}]" if ingress is None else f"omega[{a}@{ingress}]"
    return FormulaTemplate(name, "omega", OMEGA, f"∀n, p: □ ({cond} ⇒ {concl})",
                           frozenset(syms), _omega_eval(tf, a, ingress))


# -- forwarding graphs ----------------------------------------------------

@dataclass(frozen=True)
class SubnetworkGraph:
    nodes: frozenset
    links: frozenset  # directed (a, b) pairs between hosts/middleboxes

    def __contains__(self, node):
        return node in self.nodes


def forwarding_graph(tf: TransferFunction, endpoints, extra_addresses=()) -> SubnetworkGraph:
    """Least node set containing ``endpoints`` and closed under ``tf`` for
    packets addressed to included hosts (and to ``extra_addresses``).

    Middleboxes are assumed able to emit any included destination, since
    rewrites may change it.
    """
    nodes = set(endpoints)
    links: set = set()
    host_addr = dict(tf.hosts)
    while True:
        dsts = {host_addr[n] for n in nodes if n in host_addr} | set(extra_addresses)
        seen = set()
        stack = [(n, a) for n in nodes if n in host_addr for a in dsts if a != host_addr[n]]
        while stack:
            n, a = stack.pop()
            if (n, a) in seen:
                continue
            seen.add((n, a))
            for m in tf.successors(n, a):
                links.add((n, m))
                if m in tf.middleboxes:
                    stack.extend((m, b) for b in dsts)
                nodes.add(m)
        # a newly reached host adds its address as a destination
        if all(host_addr[n] in dsts for n in nodes if n in host_addr):
            break
    return SubnetworkGraph(frozenset(nodes), frozenset(links))
