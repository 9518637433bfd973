"""State-class checks, policy equivalence classes and slice construction."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from functools import lru_cache

from .core import FRESH_ADDRESS, Packet, Universe, flow_of, reverse
from .mbx import ast as A
from .mbx import DECLARED_CLASS, FixedOracle, MiddleboxModel, initial_state, instantiate, step
from .mbx.interp import MapLookupMiss, OracleValueOutOfRange

FLOW_PARALLEL = "flow-parallel"
ORIGIN_AGNOSTIC = "origin-agnostic"
GENERAL = "general"


class BoundsTooSmall(UserWarning):
    """The bounded check never reached a state where shared registers matter."""


class GeneralMiddleboxPresent(Exception):
    def __init__(self, ids):
        super().__init__(f"general middleboxes present: {', '.join(sorted(ids))}")
        self.ids = tuple(sorted(ids))


@dataclass(frozen=True)
class ClassifyBounds:
    addresses: int = 3
    ports: int = 2
    contents: int = 1
    history: int = 3
    configs: int = 3  # empty, full, then seeded random ones
    seed: int = 0


@dataclass(frozen=True)
class Witness:
    config: tuple
    history: tuple
    packet: Packet
    full: tuple  # outputs after the whole history
    restricted: tuple  # outputs after the flow-restricted history


@dataclass(frozen=True)
class StateClass:
    kind: str
    provenance: str  # "declared" | "checked" | "refuted"
    declared: str | None = None
    witness: Witness | None = None
    checked: str | None = None  # verdict of the bounded check
    advisory: str | None = None

    @property
    def mismatch(self) -> bool:
        return self.declared is not None and self.checked is not None and self.declared != self.checked


# -- bounded semantic check ---------------------------------------------------

def _domain(b: ClassifyBounds):
    addrs = tuple(f"a{i}" for i in range(b.addresses))
    ports = tuple(str(i + 1) for i in range(b.ports))
    contents = tuple(f"c{i}" for i in range(b.contents))
    return addrs, ports, contents


def _configs(model: MiddleboxModel, addrs, ports, contents, b: ClassifyBounds):
    rng = random.Random(b.seed)

    def values(sort):
        if isinstance(sort, A.TupleSort):
            return list(itertools.product(*(values(s) for s in sort.items)))
        if isinstance(sort, A.SortName):
            return list({"Address": addrs, "Port": ports, "Content": contents}.get(sort.name, addrs))
        raise TypeError(sort)

    out = []
    for k in range(b.configs):
        cfg = {}
        for i, (name, sort) in enumerate(model.params):
            if isinstance(sort, A.SetSort):
                universe = values(sort.elem)
                if k == 0:
                    cfg[name] = []
                elif k == 1:
                    cfg[name] = universe
                else:
                    cfg[name] = [v for v in universe if rng.random() < 0.5]
            else:
                vs = values(sort)
                cfg[name] = vs[(k + i) % len(vs)] if k > 1 else vs[0]
        if cfg not in out:
            out.append(cfg)
    return out


class _FlowOracle(FixedOracle):
    """Deterministic oracle: class bits and fn values depend only on the call
    arguments, so a history and its restriction see the same answers.

    Ranges containing fresh ``~k`` values get an injective assignment in
    order of first use, shared by every run.
    """

    def __init__(self, flip=False):
        super().__init__()
        self.flip = flip
        self.assigned: dict = {}

    def class_bit(self, name, packet):
        return (hash_flow(flow_of(packet)) + len(name) + self.flip) % 2 == 0

    def value(self, inst_id, fn, args, options, distinct):
        if not options:
            raise OracleValueOutOfRange(f"{fn}: empty range")
        fresh = [o for o in options if o.startswith("~")]
        if fresh:
            key = (fn, args)
            if key not in self.assigned:
                self.assigned[key] = len(self.assigned)
            return fresh[self.assigned[key] % len(fresh)]
        return options[(hash_args(args) + self.flip) % len(options)]


def hash_flow(fl) -> int:
    return sum(ord(c) for part in fl for x in part for c in x)


def hash_args(args) -> int:
    return sum(ord(c) for c in repr(args))


class _Runner:
    """Memoized interpreter runs of one instance over packet histories."""

    def __init__(self, inst, universe, oracle):
        self.inst = inst
        self.universe = universe
        self.oracle = oracle
        self.memo: dict = {}

    def step(self, st, p):
        key = (st, p)
        if key not in self.memo:
            try:
                r = step(self.inst, st, p, self.oracle, self.universe)
                self.memo[key] = (r.state, r.outputs)
            except (MapLookupMiss, OracleValueOutOfRange) as e:
                self.memo[key] = (st, (("error", type(e).__name__),))
        return self.memo[key]

    def run(self, history):
        st = initial_state(self.inst.model)
        for q in history:
            st, _ = self.step(st, q)
        return st


class _UF:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


def _reply(o: Packet) -> Packet:
    return reverse(o).with_fields(origin=o.dst)


def _histories(runner: _Runner, base: tuple, max_len: int):
    """Yield ``(history, state, links, domain)`` level by level (shortest first).

    The domain is the base packets plus replies to anything the box emitted
    so far; ``links`` pairs each input flow with the flows the box emitted for it.
    """
    level = [((), initial_state(runner.inst.model), (), ())]
    for depth in range(max_len + 1):
        nxt = []
        for h, st, links, replies in level:
            domain = base + tuple(r for r in replies if r not in base)
            yield h, st, links, domain
            if depth == max_len:
                continue
            for q in domain:
                st2, outs = runner.step(st, q)
                pk = [o for o in outs if isinstance(o, Packet)]
                new = tuple(_reply(o) for o in pk if o.dst != FRESH_ADDRESS)
                extra = tuple(x for x in new if x not in replies)
                nxt.append((h + (q,), st2, links + tuple((flow_of(q), flow_of(o)) for o in pk),
                            replies + extra))
        level = nxt


def _same_flow_alternates(runner: _Runner, p: Packet, restricted: tuple, domain, extra: int):
    """Histories made of packets in p's flow containing ``restricted`` as a subsequence,
    with at most ``extra`` inserted packets."""
    fl = flow_of(p)
    pool = sorted({q for q in domain if flow_of(q) == fl} | {q for q in restricted})
    for k in range(extra + 1):
        for ins in itertools.product(pool, repeat=k):
            for pos in itertools.combinations_with_replacement(range(len(restricted) + 1), k):
                h = list(restricted)
                for off, (i, q) in enumerate(sorted(zip(pos, ins), key=lambda x: x[0])):
                    h.insert(i + off, q)
                yield tuple(h)


def _rename_ok(runner, model_cfg, h, p, addrs, outs_full) -> bool:
    """Renaming the endpoints outside flow(p) that appear in ``h`` keeps p's outputs,
    for every renaming that fixes the configuration."""
    fl_addrs = flow_of(p).addresses
    others = sorted({x for q in h for x in (q.src, q.dst, q.origin)} - fl_addrs)
    if not others:
        return True
    targets = [a for a in addrs if a not in fl_addrs] + [FRESH_ADDRESS]
    for image in itertools.permutations(targets, len(others)):
        m = dict(zip(others, image))
        if m == {o: o for o in others}:
            continue
        if _rename_value(model_cfg, m) != model_cfg:
            continue
        h2 = tuple(q.with_fields(src=m.get(q.src, q.src), dst=m.get(q.dst, q.dst),
                                 origin=m.get(q.origin, q.origin)) for q in h)
        st = runner.run(h2)
        _, outs = runner.step(st, p)
        if outs != outs_full:
            return False
    return True


def _rename_value(v, m):
    if isinstance(v, str):
        return m.get(v, v)
    if isinstance(v, frozenset):
        return frozenset(_rename_value(x, m) for x in v)
    if isinstance(v, tuple):
        return tuple(_rename_value(x, m) for x in v)
    return v


def check_state_class(model: MiddleboxModel, b: ClassifyBounds = ClassifyBounds()):
    """Bounded check. Returns (kind, witness or None, advisory or None).

    Flow-parallel: for all (h, p) within bounds, p's outputs after h equal
    those after h restricted to p's flow class. Otherwise origin-agnostic if
    every distinguishing pair has a same-flow alternate history reproducing
    the outputs and renaming foreign endpoints does not change them.
    """
    addrs, ports, contents = _domain(b)
    n_fresh = 256
    universe = Universe(addrs, ports + tuple(f"~{i}" for i in range(n_fresh)), contents)
    base = tuple(sorted(
        Packet(s, d, sp, dp, s, c)
        for s in addrs for d in addrs if s != d for sp in ports for dp in ports for c in contents))
    # the second oracle variant only matters where a choice is not injective
    varied = model.classes or any(not isinstance(o.range, A.SortName) for o in model.oracles)
    flips = (False, True) if varied else (False,)
    witness = None
    origin_ok = True
    shared_seen = False
    for cfg_raw in _configs(model, addrs, ports, contents, b):
        inst = instantiate("m", model, cfg_raw, None)
        for flip in flips:
            runner = _Runner(inst, universe, _FlowOracle(flip))
            runs: dict = {(): initial_state(model)}
            erono: dict = {}
            for h, st, links, domain in _histories(runner, base, b.history):
                if not h:
                    continue
                if not st.is_empty:
                    shared_seen = True
                uf = _UF()
                for x, y in links:
                    uf.union(x, y)
                hflows = [uf.find(flow_of(q)) for q in h]
                for p in domain:
                    _, full = runner.step(st, p)
                    roots = {uf.find(flow_of(p))}
                    roots.update(uf.find(flow_of(o)) for o in full if isinstance(o, Packet))
                    r = tuple(q for q, fr in zip(h, hflows) if fr in roots)
                    if len(r) == len(h):
                        continue
                    if r not in runs:
                        runs[r] = runner.run(r)
                    _, part = runner.step(runs[r], p)
                    if full == part:
                        continue
                    if witness is None:
                        witness = Witness(inst.config, h, p, full, part)
                    if not origin_ok:
                        break
                    key = (p, r, full)
                    if key not in erono:
                        erono[key] = any(
                            runner.step(runner.run(h2), p)[1] == full
                            for h2 in _same_flow_alternates(runner, p, r, domain, 2))
                    if not erono[key] or not _rename_ok(runner, inst.config, h, p, addrs, full):
                        origin_ok = False
                if witness is not None and not origin_ok:
                    break
    advisory = None
    if not shared_seen and model.registers:
        advisory = "no register was ever written within bounds"
    if witness is None:
        return FLOW_PARALLEL, None, advisory
    return (ORIGIN_AGNOSTIC if origin_ok else GENERAL), witness, advisory


@lru_cache(maxsize=None)
def _cached_check(model: MiddleboxModel, b: ClassifyBounds):
    return check_state_class(model, b)


def classify_state_class(model: MiddleboxModel, b: ClassifyBounds = ClassifyBounds(),
                         declared: str | None = None, check: bool = True) -> StateClass:
    """Bounded semantic classification, reconciled with a declared tag.

    A declared tag wins (it is authoritative for slicing); the check result
    is kept alongside and a disagreement is reported via ``mismatch``.
    With ``check`` unset a declared tag is returned without running the check.
    """
    if declared is None:
        declared = DECLARED_CLASS.get(model.name) if _is_builtin(model) else None
    if declared is not None and not check:
        return StateClass(declared, "declared", declared)
    kind, witness, advisory = _cached_check(model, b)
    if declared is not None:
        return StateClass(declared, "declared", declared, witness, kind, advisory)
    prov = "checked" if witness is None else "refuted"
    return StateClass(kind, prov, None, witness, kind, advisory)


def _is_builtin(model: MiddleboxModel) -> bool:
    from .mbx import builtin
    from .mbx.library import SOURCES

    return model.name in SOURCES and builtin(model.name) == model


def instance_class(inst) -> str:
    """State class used for slicing: explicit hint, else declared/checked class."""
    if inst.hint and inst.hint != "auto":
        return inst.hint
    return classify_state_class(inst.model, check=False).kind


# -- policy equivalence classes -----------------------------------------------

def mbox_path(tf, src: str, dst_addr: str) -> tuple[tuple, str | None]:
    """Middleboxes traversed from ``src`` toward ``dst_addr`` assuming no rewrite,
    and the node finally reached (None for a blackhole or a loop)."""
    seq = []
    n = src
    while True:
        nxt = tf.next(n, dst_addr)
        if nxt is None:
            return tuple(seq), None
        if nxt not in tf.middleboxes:
            return tuple(seq), nxt
        if nxt in seq:
            return tuple(seq), None
        seq.append(nxt)
        n = nxt


def _footprint(inst, x: str, y: str) -> tuple:
    """How ``inst``'s configuration mentions the addresses x and y."""
    out = []
    for _, v in inst.config:
        if isinstance(v, frozenset):
            out.append(((x, y) in v, (y, x) in v, (x, x) in v, (y, y) in v, x in v, y in v))
        else:
            out.append((v == x, v == y))
    return tuple(out)


@dataclass
class PolicyPartition:
    """Host -> class id, with the pair relation that drove the refinement."""

    net: object
    classes: dict  # host id -> class id
    signatures: dict = field(default_factory=dict)  # class id -> canonical signature
    _rel: dict = field(default_factory=dict, repr=False)

    def class_of(self, node: str):
        if node in self.classes:
            return self.classes[node]
        inst = self.net.instance(node)
        return ("mbox", inst.type_name) if inst is not None else ("node", node)

    def relation(self, a: str, b: str):
        if a in self.classes and b in self.classes:
            return pair_relation(self.net, a, b, self._rel)
        return (a == b,)

    @property
    def class_ids(self) -> list:
        return sorted(set(self.classes.values()))

    def members(self, cid) -> list[str]:
        return sorted(h for h, c in self.classes.items() if c == cid)

    def to_json(self) -> dict:
        return {"classes": {str(c): self.members(c) for c in self.class_ids}}


def pair_relation(net, a: str, b: str, cache: dict | None = None):
    """Middlebox-type paths a->b and b->a plus the config footprint of (a, b)
    in every traversed middlebox."""
    if cache is not None and (a, b) in cache:
        return cache[(a, b)]
    tf = net.transfer()
    xa, xb = net.address_of(a), net.address_of(b)
    inst = net.instance
    fwd, end_f = mbox_path(tf, a, xb)
    bwd, end_b = mbox_path(tf, b, xa)
    fi = [inst(m) for m in fwd]
    bi = [inst(m) for m in bwd]
    sig = (
        tuple(m.type_name for m in fi), end_f == b,
        tuple(m.type_name for m in bi), end_b == a,
        tuple(_footprint(m, xa, xb) for m in fi),
        tuple(_footprint(m, xa, xb) for m in bi),
    )
    if cache is not None:
        cache[(a, b)] = sig
    return sig


def policy_partition(net) -> PolicyPartition:
    """Color refinement over hosts until the class count is stable."""
    hosts = list(net.host_ids)
    rel: dict = {}
    pairs = {h: [(o, pair_relation(net, h, o, rel)) for o in hosts if o != h] for h in hosts}
    # interning keeps signatures small
    intern: dict = {}

    def iid(x):
        return intern.setdefault(x, len(intern))

    rel_id = {h: [(o, iid(r)) for o, r in ps] for h, ps in pairs.items()}
    color = {h: 0 for h in hosts}
    n_classes = 1
    while True:
        sigs = {}
        for h in hosts:
            multiset = sorted((color[o], r) for o, r in rel_id[h])
            sigs[h] = (color[h], tuple(multiset))
        ordered = sorted(set(sigs.values()))
        ids = {s: i for i, s in enumerate(ordered)}
        new = {h: ids[sigs[h]] for h in hosts}
        if len(ordered) == n_classes:
            color = new
            break
        color, n_classes = new, len(ordered)
    # canonical ids: order classes by their least member
    order = sorted(set(color.values()), key=lambda c: min(h for h in hosts if color[h] == c))
    canon = {c: i for i, c in enumerate(order)}
    classes = {h: canon[color[h]] for h in hosts}
    return PolicyPartition(net, classes, {}, rel)


# -- slices -------------------------------------------------------------------

@dataclass(frozen=True)
class Slice:
    nodes: frozenset
    links: frozenset
    representatives: tuple  # ((class id, host), ...) added for origin-agnostic state
    rule: str  # "flow-parallel" | "origin-agnostic" | "forwarding-only"
    state_classes: tuple = ()  # ((middlebox id, class), ...)

    def to_json(self) -> dict:
        return {"nodes": sorted(self.nodes), "rule": self.rule,
                "representatives": [[c, h] for c, h in self.representatives],
                "state_classes": dict(self.state_classes)}


def _scenario_tfs(net, budget: int):
    tfs = [net.transfer()]
    for key in net.forwarding.scenario_keys:
        failed = frozenset(key.split(","))
        if len(failed) <= budget:
            tfs.append(net.transfer(failed))
    return tfs


def forwarding_closure(net, endpoints, budget: int = 0):
    from .netfunc import forwarding_graph

    nodes = frozenset(endpoints)
    links: frozenset = frozenset()
    while True:
        grown, lk = set(nodes), set(links)
        for tf in _scenario_tfs(net, budget):
            g = forwarding_graph(tf, grown, net.infra_addresses)
            grown |= g.nodes
            lk |= g.links
        if grown == nodes and lk == links:
            return nodes, links
        nodes, links = frozenset(grown), frozenset(lk)


def naive_slice(net, inv) -> Slice:
    """Forwarding closure of the referenced nodes only (no representatives)."""
    from .invariants import referenced_nodes

    nodes, links = forwarding_closure(net, referenced_nodes(inv, net), inv.max_failures)
    return Slice(nodes, links, (), "forwarding-only")


def build_slice(net, inv, partition: PolicyPartition | None = None) -> Slice:
    from .invariants import referenced_nodes

    classes = {m.id: instance_class(m) for m in net.middleboxes}
    general = [m for m, c in classes.items() if c == GENERAL]
    if general:
        raise GeneralMiddleboxPresent(general)
    nodes, links = forwarding_closure(net, referenced_nodes(inv, net), inv.max_failures)
    reps: list = []
    rule = FLOW_PARALLEL
    while any(classes.get(n) == ORIGIN_AGNOSTIC for n in nodes):
        rule = ORIGIN_AGNOSTIC
        partition = partition or policy_partition(net)
        present = {partition.classes[n] for n in nodes if n in partition.classes}
        extra = [(c, partition.members(c)[0]) for c in partition.class_ids if c not in present]
        if not extra:
            break
        reps.extend(extra)
        nodes, links = forwarding_closure(net, nodes | {h for _, h in extra}, inv.max_failures)
    used = tuple(sorted((m, classes[m]) for m in nodes if m in classes))
    return Slice(nodes, links, tuple(reps), rule, used)


def restrict(net, s: Slice):
    """The subnetwork of ``net`` induced by the slice's nodes."""
    return net.restrict(s.nodes)


def check_slice_equivalence(net, s: Slice, inv, b) -> bool:
    from .bmc import explore

    full = explore(net, inv, b)
    part = explore(restrict(net, s), inv, b)
    if "unknown" in (full.kind, part.kind):
        raise RuntimeError(f"inconclusive: full={full}, slice={part}")
    return full.kind == part.kind
