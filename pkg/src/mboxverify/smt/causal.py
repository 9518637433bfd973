"""Experimental unbounded encoding over an uninterpreted Event sort.

Every receive event has a ``cause`` (the send that produced it), and a
send is its own cause.  A middlebox send has a trigger, the receive it
answers.  Register facts are justified by Skolem witnesses: an earlier
receive whose rule wrote the element.  Conditions the encoding cannot
express exactly (negated register facts, nested witnesses) are weakened,
so the axioms over-approximate the network.  An ``unsat`` answer is
therefore a proof for runs of any length.  A ``sat`` answer may be
spurious.  Closure axioms for events are not generated.
"""
from __future__ import annotations

from ..invariants import (Invariant, NoPriorOutboundFlow, NotTraversed, OriginEquals, PAnd, PNot, POr,
                          SrcEquals, negate)
from ..mbx import ast as A
from ..netfunc import StaticLoop
from .bounded import SmtScript
from .terms import FALSE, FIELD_SORT, TRUE, and_, eq_int, not_, or_

FIELD_FN = {"src": "psrc", "dst": "pdst", "src_port": "psport", "dst_port": "pdport",
            "origin": "porig", "content": "pcont"}
SORT_OF = {"Address": "Addr", "Port": "Port", "Content": "Content"}
PREFIX = {"Addr": "a", "Port": "q", "Content": "c", "Node": "n"}


class RestrictionViolated(Exception):
    def __init__(self, criterion: str, detail: str):
        super().__init__(f"causal encoding not applicable ({criterion}): {detail}")
        self.criterion = criterion
        self.detail = detail


def _walk(e):
    yield e
    for v in getattr(e, "__dict__", {}).values():
        for x in (v if isinstance(v, tuple) else (v,)):
            if hasattr(x, "__dataclass_fields__"):
                yield from _walk(x)
            elif isinstance(x, tuple):
                for y in x:
                    if hasattr(y, "__dataclass_fields__"):
                        yield from _walk(y)


def check_restrictions(net, inv: Invariant, budget: int | None = None):
    """Raise RestrictionViolated for networks outside the supported fragment."""
    for m in net.middleboxes:
        model = m.model
        # criterion 1: passive, i.e. every send answers a receive (true of all rules)
        # criterion 2: finitely many packets per receive
        if any(r.out_count > 8 for r in model.rules):
            raise RestrictionViolated("finite-sends", f"{m.id} emits more than 8 packets per receive")
        for r in model.registers:
            if r.is_map:
                raise RestrictionViolated("supported-state", f"{m.id}.{r.name} is a Map register")
        if model.oracles:
            raise RestrictionViolated("supported-state", f"{m.id} uses oracle functions")
        for rule in model.rules:
            nodes = list(_walk(rule.guard)) if rule.guard is not None else []
            for a in rule.actions:
                nodes += list(_walk(a))
            if any(isinstance(x, (A.Lookup, A.Call)) for x in nodes):
                raise RestrictionViolated("supported-state", f"{m.id} uses map lookups or oracles")
    if (inv.max_failures if budget is None else budget) > 0:
        raise RestrictionViolated("failure-free", "failure scenarios are only encoded in bounded mode")
    # criterion 3: every packet is delivered or dropped in finitely many steps
    try:
        net.transfer(frozenset())
    except StaticLoop as e:
        raise RestrictionViolated("finite-delivery", str(e)) from None


class _Causal:
    def __init__(self, net, inv: Invariant):
        self.net = net
        self.inv = inv
        self.out: list[str] = []
        self.hosts = list(net.host_ids)
        self.mboxes = sorted(net.middlebox_ids)
        self.nodes = self.hosts + self.mboxes
        vals = {"Address": set(net.universe.addresses) | {net.address_of(h) for h in self.hosts},
                "Port": set(net.universe.ports), "Content": set(net.universe.contents)}
        for m in net.middleboxes:
            cfg = m.config_map
            for name, sort in m.model.params:
                self._collect(cfg[name], sort, vals)
        self.vals = {s: sorted(v) for s, v in vals.items()}
        self.skolem = 0
        self.vias = []

    def _collect(self, v, sort, vals):
        if isinstance(sort, A.SetSort):
            for x in v:
                self._collect(x, sort.elem, vals)
        elif isinstance(sort, A.TupleSort):
            for x, s in zip(v, sort.items):
                self._collect(x, s, vals)
        elif isinstance(sort, A.SortName) and sort.name in vals:
            vals[sort.name].add(v)

    def const(self, sort: str, v) -> str:
        vals = self.vals[sort]
        if v not in vals:
            return "none"
        return f"{PREFIX[SORT_OF[sort]]}{vals.index(v)}"

    def node(self, n) -> str:
        return f"n{self.nodes.index(n)}" if n in self.nodes else "drop"

    # -- expressions over an event term -------------------------------------------

    def field(self, f, e):
        return f"({FIELD_FN[f]} {e})"

    def value(self, x, cx):
        t = type(x)
        if t is A.PField:
            return cx["fields"].get(x.field, self.field(x.field, cx["e"]))
        if t is A.Var:
            if x.name in cx["locals"]:
                return cx["locals"][x.name]
            sort = cx["model"].param_sort(x.name)
            return self._const_of(cx["cfg"][x.name], sort)
        if t is A.Lit:
            return ("lit", x.value)
        if t is A.TupleE:
            return tuple(self.value(i, cx) for i in x.items)
        if t is A.Proj:
            return self.value(x.expr, cx)[x.index]
        if t is A.FlowE:
            over = dict(cx["fields"])
            over.update((f, self.value(v, cx)) for f, v in x.pkt.overrides)
            get = lambda f: over.get(f, self.field(f, cx["e"]))  # noqa: E731
            return ("flow", (get("src"), get("src_port")), (get("dst"), get("dst_port")))
        if t is A.PktExpr:
            over = dict(cx["fields"])
            over.update((f, self.value(v, cx)) for f, v in x.overrides)
            return ("pkt", {f: over.get(f, self.field(f, cx["e"])) for f in FIELD_FN})
        raise RestrictionViolated("supported-state", f"cannot encode {type(x).__name__}")

    def _const_of(self, v, sort):
        if isinstance(sort, A.TupleSort):
            return tuple(self._const_of(a, s) for a, s in zip(v, sort.items))
        return self.const(sort.name, v)

    def eq(self, a, b) -> str:
        if isinstance(a, tuple) and a and a[0] == "lit":
            a, b = b, a
        if isinstance(b, tuple) and b and b[0] == "lit":
            return FALSE  # literals outside the enumerations never match
        if isinstance(a, tuple) and a and a[0] == "flow":
            ep = lambda x, y: and_(eq_int(x[0], y[0]), eq_int(x[1], y[1]))  # noqa: E731
            return or_(and_(ep(a[1], b[1]), ep(a[2], b[2])), and_(ep(a[1], b[2]), ep(a[2], b[1])))
        if isinstance(a, tuple) and a and a[0] == "pkt":
            return and_(*(eq_int(a[1][f], b[1][f]) for f in FIELD_FN))
        if isinstance(a, tuple):
            return and_(*(self.eq(x, y) for x, y in zip(a, b)))
        if "none" in (a, b):
            return FALSE
        return eq_int(a, b)

    def cond(self, g, cx, pos: bool, depth: int) -> str:
        """Encode guard ``g``; facts that cannot be encoded exactly are
        replaced by whatever makes the result weaker under polarity ``pos``."""
        t = type(g)
        weak = TRUE if pos else FALSE
        if t is A.TrueG:
            return TRUE
        if t is A.FailSelf:
            return FALSE  # runs are failure-free
        if t is A.Eq:
            return self.eq(self.value(g.left, cx), self.value(g.right, cx))
        if t is A.Ne:
            return not_(self.eq(self.value(g.left, cx), self.value(g.right, cx)))
        if t is A.And:
            return and_(self.cond(g.left, cx, pos, depth), self.cond(g.right, cx, pos, depth))
        if t is A.Or:
            return or_(self.cond(g.left, cx, pos, depth), self.cond(g.right, cx, pos, depth))
        if t is A.Not:
            return not_(self.cond(g.expr, cx, not pos, depth))
        if t is A.ClassP:
            fl = self.value(A.FlowE(g.pkt), cx)
            args = " ".join([fl[1][0], fl[1][1], fl[2][0], fl[2][1]])
            return f"(cls_{g.name} {args})"
        if t is A.Contains:
            elem = self.value(g.elem, cx)
            model = cx["model"]
            if model.register(g.name) is None:
                sort = model.param_sort(g.name).elem
                return or_(*(self.eq(elem, self._const_of(v, sort)) for v in sorted(cx["cfg"][g.name], key=repr)))
            if not pos or depth > 0:
                return weak
            return self.witness(cx, g.name, elem)
        raise RestrictionViolated("supported-state", f"cannot encode {t.__name__}")

    def witness(self, cx, reg, elem) -> str:
        """``reg`` holds ``elem`` when ``cx['e']`` is received: some earlier
        receive at the same box fired a rule that wrote it."""
        self.skolem += 1
        w = f"(wit{self.skolem} {cx['e']})"
        self.out.append(f"(declare-fun wit{self.skolem} (Event) Event)")
        inst = cx["inst"]
        opts = []
        for rule in inst.model.rules:
            sub = {"e": w, "model": inst.model, "cfg": cx["cfg"], "inst": inst, "fields": {}, "locals": {}}
            g = TRUE if rule.guard is None else self.cond(rule.guard, sub, True, 1)
            writes = []
            for act in rule.actions:
                self.apply(act, sub)
                if isinstance(act, A.SetAdd) and act.reg == reg:
                    writes.append(self.eq(self.value(act.elem, sub), elem))
            if writes:
                opts.append(and_(g, or_(*writes)))
        return and_(f"(rcv {w})", f"(= (dst {w}) {self.node(inst.id)})",
                    f"(lt (time {w}) (time {cx['e']}))", or_(*opts))

    def apply(self, act, cx):
        if isinstance(act, A.Let):
            v = self.value(act.expr, cx)
            if len(act.names) == 1:
                cx["locals"][act.names[0]] = v
            else:
                cx["locals"].update(zip(act.names, v))
        elif isinstance(act, A.FieldAssign):
            cx["fields"][act.field] = self.value(act.expr, cx)

    # -- script ----------------------------------------------------------------------

    def encode(self) -> SmtScript:
        net, inv = self.net, self.inv
        check_restrictions(net, inv)
        cond = negate(inv)
        o = self.out
        o += ["; EXPERIMENTAL causal encoding: unsat proves the invariant for runs of any",
              "; length; sat may be spurious (the axioms over-approximate the network).",
              "(set-logic UF)",
              "(declare-sort Event 0)", "(declare-sort Time 0)", "(declare-sort Node 0)",
              "(declare-sort Addr 0)", "(declare-sort Port 0)", "(declare-sort Content 0)"]
        for sort, py in (("Addr", "Address"), ("Port", "Port"), ("Content", "Content")):
            names = [f"{PREFIX[sort]}{i}" for i in range(len(self.vals[py]))]
            for n in names:
                o.append(f"(declare-const {n} {sort})")
            if len(names) > 1:
                o.append(f"(assert (distinct {' '.join(names)}))")
            if names:
                o.append(f"(assert (forall ((x {sort})) {or_(*(f'(= x {n})' for n in names))}))")
        nodes = [f"n{i}" for i in range(len(self.nodes))] + ["drop"]
        for n in nodes:
            o.append(f"(declare-const {n} Node)")
        if len(nodes) > 1:
            o.append(f"(assert (distinct {' '.join(nodes)}))")
        o += ["(declare-fun snd (Event) Bool)", "(declare-fun rcv (Event) Bool)",
              "(declare-fun cause (Event) Event)", "(declare-fun trig (Event) Event)",
              "(declare-fun time (Event) Time)", "(declare-fun lt (Time Time) Bool)",
              "(declare-fun src (Event) Node)", "(declare-fun dst (Event) Node)",
              "(declare-fun route (Node Addr) Node)", "(declare-fun addr (Node) Addr)"]
        for f, fn in FIELD_FN.items():
            o.append(f"(declare-fun {fn} (Event) {SORT_OF[FIELD_SORT[f]]})")
        classes = sorted({c.name for m in net.middleboxes for c in m.model.classes})
        for c in classes:
            o.append(f"(declare-fun cls_{c} (Addr Port Addr Port) Bool)")
            o.append(f"(assert (forall ((a Addr) (b Port) (c Addr) (d Port)) "
                     f"(= (cls_{c} a b c d) (cls_{c} c d a b))))")
        for m in net.middleboxes:
            for g in m.model.exclusion_groups():
                x, y = sorted(g)
                o.append(f"(assert (forall ((a Addr) (b Port) (c Addr) (d Port)) "
                         f"(not (and (cls_{x} a b c d) (cls_{y} a b c d)))))")
        # time is a strict order
        o += ["(assert (forall ((x Time)) (not (lt x x))))",
              "(assert (forall ((x Time) (y Time) (z Time)) (=> (and (lt x y) (lt y z)) (lt x z))))"]
        # cause and idempotency
        o += ["(assert (forall ((e Event)) (not (and (snd e) (rcv e)))))",
              "(assert (forall ((e Event)) (=> (snd e) (= (cause e) e))))",
              "(assert (forall ((e Event)) (=> (rcv e) (and (snd (cause e)) "
              "(lt (time (cause e)) (time e)) (= (src e) (src (cause e))) (= (dst e) (dst (cause e))) "
              + " ".join(f"(= ({fn} e) ({fn} (cause e)))" for fn in FIELD_FN.values())
              + " (not (= (dst e) drop))))))",
              "(assert (forall ((e Event)) (=> (snd e) (= (dst e) (route (src e) (pdst e))))))"]
        # routing table as ground facts
        tf = net.transfer(frozenset())
        for n in self.nodes:
            for i, a in enumerate(self.vals["Address"]):
                o.append(f"(assert (= (route {self.node(n)} a{i}) {self.node(tf.next(n, a))}))")
        for h in self.hosts:
            o.append(f"(assert (= (addr {self.node(h)}) {self.const('Address', net.address_of(h))}))")
        # who may send
        u_addr = [self.const("Address", a) for a in net.universe.addresses]
        u_port = [self.const("Port", a) for a in net.universe.ports]
        u_cont = [self.const("Content", a) for a in net.universe.contents]
        in_u = lambda t, vs: or_(*(f"(= {t} {v})" for v in vs))  # noqa: E731
        host_send = and_(or_(*(f"(= (src e) {self.node(h)})" for h in self.hosts)),
                         "(= (psrc e) (addr (src e)))", "(= (porig e) (psrc e))",
                         "(not (= (pdst e) (psrc e)))", in_u("(pdst e)", u_addr),
                         in_u("(psport e)", u_port), in_u("(pdport e)", u_port),
                         in_u("(pcont e)", u_cont))
        senders = [host_send]
        for m in self.mboxes:
            senders.append(self.mbox_send(net.instance(m)))
        o.append(f"(assert (forall ((e Event)) (=> (snd e) {or_(*senders)})))")
        self.traversal(cond)
        # the negated invariant, on a fresh event v
        o.append("(declare-const v Event)")
        target = self.node(cond.target) if cond.target in self.nodes else None
        if target is None:
            o.append("(assert false)")
        else:
            o.append(f"(assert (and (rcv v) (= (dst v) {target}) {self.pred(cond.predicate, cond.target)}))")
        o += ["(check-sat)", ""]
        return SmtScript("\n".join(o), "causal", None,
                         tuple((f"n{i}", n) for i, n in enumerate(self.nodes)))

    def mbox_send(self, inst) -> str:
        """A send from ``inst`` answers an earlier receive at it, through a rule that fired."""
        r = "(trig e)"
        opts = []
        prev_neg = []
        for rule in inst.model.rules:
            cx = {"e": r, "model": inst.model, "cfg": inst.config_map, "inst": inst,
                  "fields": {}, "locals": {}}
            g = TRUE if rule.guard is None else self.cond(rule.guard, cx, True, 0)
            neg = TRUE if rule.guard is None else not_(self.cond(rule.guard, cx, False, 0))
            for act in rule.actions:
                self.apply(act, cx)
            if isinstance(rule.terminator, A.Forward):
                for pk in rule.terminator.pkts:
                    out = self.value(pk, cx)[1]
                    same = and_(*(eq_int(f"({FIELD_FN[f]} e)", out[f]) for f in FIELD_FN))
                    opts.append(and_(*prev_neg, g, same))
            prev_neg.append(neg)
        return and_(f"(= (src e) {self.node(inst.id)})", f"(rcv {r})",
                    f"(= (dst {r}) {self.node(inst.id)})", f"(lt (time {r}) (time e))", or_(*opts))

    def traversal(self, cond):
        self.vias = sorted(_vias(cond.predicate))
        for j, via in enumerate(self.vias):
            members = [m for m in self.mboxes if m == via or self.net.instance(m).type_name == via]
            here = or_(*(f"(= (src e) {self.node(m)})" for m in members))
            self.out += [
                f"(declare-fun trav{j} (Event) Bool)",
                f"(assert (forall ((e Event)) (=> (rcv e) (= (trav{j} e) (trav{j} (cause e))))))",
                "(assert (forall ((e Event)) (=> (and (snd e) "
                + or_(*(f"(= (src e) {self.node(h)})" for h in self.hosts))
                + f") (not (trav{j} e)))))",
                "(assert (forall ((e Event)) (=> (and (snd e) "
                + or_(*(f"(= (src e) {self.node(m)})" for m in self.mboxes))
                + f") (= (trav{j} e) {or_(here, f'(trav{j} (trig e))')}))))",
            ]

    def pred(self, p, target) -> str:
        if isinstance(p, SrcEquals):
            c = self.const("Address", p.address)
            return FALSE if c == "none" else f"(= (psrc v) {c})"
        if isinstance(p, OriginEquals):
            c = self.const("Address", p.address)
            return FALSE if c == "none" else f"(= (porig v) {c})"
        if isinstance(p, NoPriorOutboundFlow):
            same = or_(and_("(= (psrc e) (psrc v))", "(= (psport e) (psport v))",
                            "(= (pdst e) (pdst v))", "(= (pdport e) (pdport v))"),
                       and_("(= (psrc e) (pdst v))", "(= (psport e) (pdport v))",
                            "(= (pdst e) (psrc v))", "(= (pdport e) (psport v))"))
            return (f"(forall ((e Event)) (not (and (snd e) (= (src e) {self.node(target)}) "
                    f"(lt (time e) (time v)) {same})))")
        if isinstance(p, NotTraversed):
            return f"(not (trav{self.vias.index(p.via)} v))"
        if isinstance(p, PAnd):
            return and_(self.pred(p.left, target), self.pred(p.right, target))
        if isinstance(p, POr):
            return or_(self.pred(p.left, target), self.pred(p.right, target))
        if isinstance(p, PNot):
            return not_(self.pred(p.inner, target))
        raise TypeError(p)


def _vias(pred) -> set:
    if isinstance(pred, NotTraversed):
        return {pred.via}
    if isinstance(pred, (PAnd, POr)):
        return _vias(pred.left) | _vias(pred.right)
    if isinstance(pred, PNot):
        return _vias(pred.inner)
    return set()


def encode_causal(net, inv: Invariant) -> SmtScript:
    """Unbounded, over-approximating encoding (experimental); see module doc."""
    return _Causal(net, inv).encode()



