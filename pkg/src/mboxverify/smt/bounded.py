"""Bounded SMT encoding of a network run (QF_UFLIA), and trace decoding.

One event per timestep.  Step ``t`` has a kind, the packet it emits or
receives, and ``S`` send slots; a receive consumes exactly one earlier
slot on its link, in FIFO order.  Every register element of every
instance has a snapshot per step, and each rule is compiled into guarded
updates of those snapshots.  Oracle calls become per-call-site constants
tied together by consistency (and distinctness) constraints.

Eventualities of the axioms are expanded over explicit earlier timestep
indices: a receive at ``t`` names the slot ``(u, s)`` with ``u < t`` that
produced it, and state facts refer to the snapshot at ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..bmc import BindingOracle, Bounds, TraceDiverges, _excludes, class_key, fn_key
from ..core import (FRESH_ADDRESS, FRESH_CONTENT, FRESH_PORT, PACKET_FIELDS, Fail, HostEmit, Packet,
                    Recover, Recv, Trace, flow_of)
from ..invariants import (DeliveryCtx, Invariant, NoPriorOutboundFlow, NotTraversed, OriginEquals, PAnd,
                          PNot, POr, SrcEquals, negate)
from ..mbx import ast as A
from ..mbx import axiom_templates, fail_state, initial_state, recover_state, step
from ..mbx.interp import oracle_range
from ..netfunc import omega_axioms
from .terms import (FALSE, FIELD_SORT, TRUE, Enums, SBool, SFlow, SInt, SLit, SPkt, and_, concrete,
                    count, decode_value, eq_int, flatten, flow_of_sym, iff, implies, ite, not_, num,
                    or_, sym_eq, sym_ite, unflatten, width)

IDLE, EMIT, RECV, FAIL, RECOVER = range(5)
MAX_SYMBOLS = 250_000
MAX_DOMAIN = 20_000


class UniverseTooLarge(Exception):
    pass


class ModelIncomplete(Exception):
    pass


@dataclass(frozen=True)
class CallSite:
    kind: str  # "fn" | "class"
    t: int
    inst: str
    name: str
    arg_sorts: tuple
    arg_vars: tuple  # per arg, its component constants
    result: object  # sort (None for class bits)
    value_vars: tuple
    act: str


@dataclass
class _Meta:
    K: int
    nodes: tuple
    hosts: tuple
    enums: Enums
    sites: list = field(default_factory=list)
    query: tuple = ()


@dataclass(frozen=True)
class SmtScript:
    text: str
    mode: str  # "bounded" | "causal"
    K: int | None = None
    symbols: tuple = ()  # ((solver name, entity), ...)
    meta: object = field(default=None, compare=False, repr=False)

    def __str__(self):
        return self.text

    @property
    def experimental(self) -> bool:
        return self.mode == "causal"


# -- model compilation ----------------------------------------------------------------

class _Reg:
    """Symbolic register contents: one presence bit (and a value for maps)
    per element of the finite key domain."""

    def __init__(self, decl: A.RegisterDecl, elems, bits, vals):
        self.decl = decl
        self.elems = elems
        self.bits = list(bits)
        self.vals = list(vals) if vals is not None else None

    def copy(self):
        return _Reg(self.decl, self.elems, self.bits, self.vals)

    @property
    def key_sort(self):
        return self.decl.sort.key if self.decl.is_map else self.decl.sort.elem


class _Cx:
    def __init__(self, enc, inst, t, regs, pkt, failed, pc):
        self.enc = enc
        self.inst = inst
        self.model = inst.model
        self.cfg = inst.config_map
        self.t = t
        self.regs = regs
        self.pkt = pkt
        self.failed = failed
        self.pc = pc
        self.locals = {}

    def sub(self, pc):
        c = _Cx(self.enc, self.inst, self.t, self.regs, self.pkt, self.failed, pc)
        c.locals = self.locals
        return c


def _resolve(v, sort, en):
    """Turn literals into enumerated constants of ``sort``."""
    if isinstance(v, SLit):
        return concrete(v.value, sort, en)
    if isinstance(v, tuple) and isinstance(sort, A.TupleSort):
        return tuple(_resolve(x, s, en) for x, s in zip(v, sort.items))
    return v


def _ev(e, cx: _Cx):
    en = cx.enc.en
    t = type(e)
    if t is A.PField:
        return cx.pkt.get(e.field)
    if t is A.Var:
        if e.name in cx.locals:
            return cx.locals[e.name]
        return concrete(cx.cfg[e.name], cx.model.param_sort(e.name), en)
    if t is A.Lit:
        return SLit(e.value)
    if t is A.PktExpr:
        if not e.overrides:
            return cx.pkt
        return cx.pkt.with_fields({f: _resolve(_ev(x, cx), A.SortName(FIELD_SORT[f]), en)
                                   for f, x in e.overrides})
    if t is A.FlowE:
        return flow_of_sym(_ev(e.pkt, cx))
    if t is A.TupleE:
        return tuple(_ev(x, cx) for x in e.items)
    if t is A.Proj:
        return _ev(e.expr, cx)[e.index]
    if t is A.Contains:
        elem = _ev(e.elem, cx)
        if e.name in cx.regs:
            r = cx.regs[e.name]
            return SBool(or_(*(and_(b, sym_eq(elem, concrete(x, r.key_sort, en), en))
                               for x, b in zip(r.elems, r.bits))))
        sort = cx.model.param_sort(e.name).elem
        return SBool(or_(*(sym_eq(elem, concrete(x, sort, en), en)
                           for x in sorted(cx.cfg[e.name], key=repr))))
    if t is A.Lookup:
        return cx.enc.lookup(cx.regs[e.reg], _ev(e.key, cx), cx.pc)
    if t is A.Eq:
        return SBool(sym_eq(_ev(e.left, cx), _ev(e.right, cx), en))
    if t is A.Ne:
        return SBool(not_(sym_eq(_ev(e.left, cx), _ev(e.right, cx), en)))
    if t is A.And:
        lt = _ev(e.left, cx).term
        rt = _ev(e.right, cx.sub(and_(cx.pc, lt))).term
        return SBool(and_(lt, rt))
    if t is A.Or:
        lt = _ev(e.left, cx).term
        rt = _ev(e.right, cx.sub(and_(cx.pc, not_(lt)))).term
        return SBool(or_(lt, rt))
    if t is A.Not:
        return SBool(not_(_ev(e.expr, cx).term))
    if t is A.TrueG:
        return SBool(TRUE)
    if t is A.FailSelf:
        return SBool(cx.failed)
    if t is A.ClassP:
        fl = flow_of_sym(_ev(e.pkt, cx))
        return SBool(cx.enc.site("class", cx, e.name, (A.SortName("Flow"),), (fl,), None))
    if t is A.Call:
        decl = cx.model.oracle(e.fn)
        args = tuple(_resolve(_ev(a, cx), s, en) for a, s in zip(e.args, decl.arg_sorts))
        return cx.enc.site("fn", cx, e.fn, decl.arg_sorts, args, decl)
    raise TypeError(f"cannot encode {e!r}")  # pragma: no cover


# -- encoder --------------------------------------------------------------------------

class _Encoder:
    def __init__(self, net, inv: Invariant, K: int, b: Bounds):
        self.net = net
        self.inv = inv
        self.K = K
        self.universe = b.universe or net.universe
        self.budget = inv.max_failures if b.budget is None else b.budget
        self.max_emits = K if b.max_emits is None else b.max_emits
        self.allow_recovery = b.allow_recovery
        self.hosts = tuple(net.host_ids)
        self.mboxes = tuple(sorted(net.middlebox_ids))
        self.nodes = self.hosts + self.mboxes
        self.nidx = {n: i for i, n in enumerate(self.nodes)}
        self.failable = [m for m in self.mboxes if b.failable is None or m in b.failable]
        self.en = Enums(self.universe, self._extras())
        self.S = max([1] + [net.instance(m).model.max_outputs for m in self.mboxes])
        self.lines: list[str] = []
        self.decls: list[str] = []
        self.asserts: list[str] = []
        self.nsym = 0
        self.meta = _Meta(K, self.nodes, self.hosts, self.en)
        self.vias = sorted(_vias(inv.predicate))
        self._fresh = 0
        self.distinct: dict = {}

    def _extras(self) -> dict:
        """Values beyond the universe that packets may carry: host addresses,
        configuration constants and literal oracle ranges."""
        out: dict = {"Address": set(self.net.universe.addresses), "Port": set(), "Content": set()}
        out["Address"] |= {self.net.address_of(h) for h in self.net.host_ids}

        def walk(v, sort):
            if isinstance(sort, A.SetSort):
                for x in v:
                    walk(x, sort.elem)
            elif isinstance(sort, A.TupleSort):
                for x, s in zip(v, sort.items):
                    walk(x, s)
            elif isinstance(sort, A.SortName) and sort.name in out:
                out[sort.name].add(v)
        for m in self.mboxes:
            inst = self.net.instance(m)
            cfg = inst.config_map
            for name, sort in inst.model.params:
                walk(cfg[name], sort)
            for o in inst.model.oracles:
                if isinstance(o.range, tuple) and isinstance(o.result, A.SortName):
                    out[o.result.name].update(o.range)
        return out

    # -- declarations ------------------------------------------------------------

    def declare(self, name: str, sort: str = "Int") -> str:
        self.decls.append(f"(declare-const {name} {sort})")
        self.nsym += 1
        if self.nsym > MAX_SYMBOLS:
            raise UniverseTooLarge(f"encoding exceeds {MAX_SYMBOLS} symbols")
        return name

    def assert_(self, term: str):
        if term == TRUE:
            return
        self.asserts.append(f"(assert {term})")

    def define(self, name: str, term: str, sort: str = "Bool") -> str:
        """Name ``term`` unless it is a constant."""
        if term in (TRUE, FALSE) or (sort == "Int" and term.lstrip("-").isdigit()):
            return term
        self.declare(name, sort)
        self.assert_(f"(= {name} {term})")
        return name

    def fresh(self, prefix: str) -> str:
        self._fresh += 1
        return f"{prefix}{self._fresh}"

    def in_range(self, v: str, lo: int, hi: int) -> str:
        return f"(and (<= {lo} {v}) (<= {v} {hi}))" if hi > lo else eq_int(v, num(lo))

    # -- symbolic helpers --------------------------------------------------------

    def lookup(self, reg: _Reg, key, pc: str):
        conds = [sym_eq(key, concrete(x, reg.key_sort, self.en), self.en) for x in reg.elems]
        self.assert_(implies(pc, or_(*(and_(c, b) for c, b in zip(conds, reg.bits)))))
        vsort = reg.decl.sort.value
        acc = reg.vals[-1]
        for c, v in zip(reversed(conds[:-1]), reversed(reg.vals[:-1])):
            acc = sym_ite(c, v, acc)
        name = self.fresh("lk")
        terms = [self.define(f"{name}_{i}", x, "Int") for i, x in enumerate(flatten(acc))]
        return unflatten(terms, vsort)

    def site(self, kind, cx: _Cx, name, arg_sorts, args, decl):
        sid = len(self.meta.sites)
        act = self.define(f"act{sid}", cx.pc)
        arg_vars = tuple(
            tuple(self.pin(f"arg{sid}_{i}_{j}", x) for j, x in enumerate(flatten(a)))
            for i, a in enumerate(args))
        if kind == "class":
            val = self.declare(f"cls{sid}", "Bool")
            self.meta.sites.append(CallSite(kind, cx.t, cx.inst.id, name, arg_sorts, arg_vars,
                                            None, (val,), act))
            return val
        rsort = decl.result
        vals = tuple(self.declare(f"orc{sid}_{j}") for j in range(width(rsort)))
        value = unflatten(list(vals), rsort)
        opts = oracle_range(decl, cx.cfg, self.universe)
        self.assert_(implies(act, or_(*(sym_eq(value, concrete(o, rsort, self.en), self.en)
                                        for o in opts))))
        self.meta.sites.append(CallSite(kind, cx.t, cx.inst.id, name, arg_sorts, arg_vars,
                                        rsort, vals, act))
        self.distinct[sid] = decl.distinct
        return value

    def pin(self, name: str, term: str) -> str:
        """A named Int constant equal to ``term`` (always declared, so the
        decoder can read it back)."""
        self.declare(name)
        self.assert_(f"(= {name} {term})")
        return name

    # -- registers -----------------------------------------------------------------

    def reg_vars(self, mi: int, inst, t: int) -> dict:
        regs = {}
        for ri, decl in enumerate(inst.model.registers):
            ksort = decl.sort.key if decl.is_map else decl.sort.elem
            elems = self._domain(ksort)
            bits = [FALSE] * len(elems) if t == 0 else [
                self.declare(f"R{mi}_{ri}_{ei}_{t}", "Bool") for ei in range(len(elems))]
            vals = None
            if decl.is_map:
                w = width(decl.sort.value)
                vals = [unflatten([self.declare(f"V{mi}_{ri}_{ei}_{c}_{t}") for c in range(w)],
                                  decl.sort.value) for ei in range(len(elems))]
            regs[decl.name] = _Reg(decl, elems, bits, vals)
        return regs

    def _domain(self, sort):
        key = repr(sort)
        if key not in self._domains:
            dom = self.en.domain(sort)
            if len(dom) > MAX_DOMAIN:
                raise UniverseTooLarge(f"register domain {sort} has {len(dom)} elements")
            self._domains[key] = dom
        return self._domains[key]

    # -- one middlebox, one step ---------------------------------------------------

    def mbox_step(self, mi: int, inst, t: int, regs: dict, pkt: SPkt, failed: str, rx: str):
        """Returns (per-slot [(cond, packet)], next registers)."""
        model = inst.model
        eff = rx if model.failure == A.FailurePolicy.EXPLICIT else and_(rx, not_(failed))
        running = {k: r.copy() for k, r in regs.items()}
        outs = [[] for _ in range(self.S)]
        notprev = TRUE
        for i, rule in enumerate(model.rules):
            cx = _Cx(self, inst, t, regs, pkt, failed, and_(eff, notprev))
            g = TRUE if rule.guard is None else _ev(rule.guard, cx).term
            fired = self.define(f"fr{mi}_{t}_{i}", and_(eff, notprev, g))
            notprev = and_(notprev, not_(g))
            ax = _Cx(self, inst, t, running, pkt, failed, fired)
            for act in rule.actions:
                self._exec(act, ax, fired)
            if isinstance(rule.terminator, A.Forward):
                for s, pk in enumerate(rule.terminator.pkts):
                    outs[s].append((fired, _ev(pk, ax)))
        if model.failure == A.FailurePolicy.OPEN:
            outs[0].append((and_(rx, failed), pkt))
        return outs, running

    def _exec(self, act, cx: _Cx, fired: str):
        en = self.en
        if isinstance(act, A.Let):
            v = _ev(act.expr, cx)
            if len(act.names) == 1:
                cx.locals[act.names[0]] = v
            else:
                cx.locals.update(zip(act.names, v))
        elif isinstance(act, A.FieldAssign):
            v = _resolve(_ev(act.expr, cx), A.SortName(FIELD_SORT[act.field]), en)
            cx.pkt = cx.pkt.with_fields({act.field: v})
        elif isinstance(act, A.SetAdd):
            r = cx.regs[act.reg]
            e = _resolve(_ev(act.elem, cx), r.key_sort, en)
            r.bits = [or_(b, and_(fired, sym_eq(e, concrete(x, r.key_sort, en), en)))
                      for x, b in zip(r.elems, r.bits)]
        elif isinstance(act, A.MapPut):
            r = cx.regs[act.reg]
            k = _resolve(_ev(act.key, cx), r.key_sort, en)
            v = _resolve(_ev(act.value, cx), r.decl.sort.value, en)
            hits = [and_(fired, sym_eq(k, concrete(x, r.key_sort, en), en)) for x in r.elems]
            r.bits = [or_(b, h) for b, h in zip(r.bits, hits)]
            r.vals = [sym_ite(h, v, old) for h, old in zip(hits, r.vals)]
        else:  # pragma: no cover
            raise TypeError(act)

    # -- routing ---------------------------------------------------------------------

    def route_defs(self):
        """One define-fun per reachable forwarding table; returns
        [(failed set or None, function name)], default last."""
        tables = []
        budget_keys = []
        for key in self.net.forwarding.scenario_keys:
            fs = frozenset(x for x in key.split(",") if x)
            if key == "default" or not fs or not fs <= set(self.failable) or len(fs) > self.budget:
                continue
            budget_keys.append(fs)
        for j, fs in enumerate(budget_keys + [None]):
            failed = fs if fs is not None else frozenset()
            cases = []
            for n in self.nodes:
                for a in self.en.values["Address"]:
                    nxt = self.net.route(n, a, failed)
                    if nxt is not None:
                        cases.append((self.nidx[n], self.en.index("Address", a), self.nidx[nxt]))
            body = num(-1)
            for n, a, nx in reversed(cases):
                body = f"(ite (and (= n {n}) (= d {a})) {nx} {body})"
            name = f"route{j}"
            self.lines.append(f"(define-fun {name} ((n Int) (d Int)) Int {body})")
            tables.append((fs, name))
        return tables

    def route_at(self, t: int, sender: str, dst: str) -> str:
        term = f"({self.tables[-1][1]} {sender} {dst})"
        for fs, name in reversed(self.tables[:-1]):
            term = ite(self.scen[t][fs], f"({name} {sender} {dst})", term)
        return term

    # -- the whole run --------------------------------------------------------------

    def encode(self) -> SmtScript:
        self._domains: dict = {}
        K, S, net, en = self.K, self.S, self.net, self.en
        cond = negate(self.inv)
        self.lines += ["(set-logic QF_UFLIA)", "(set-option :produce-models true)"]
        self._comments()
        self.tables = self.route_defs()
        target = self.nidx.get(cond.target)
        minst = {m: net.instance(m) for m in self.mboxes}
        mpos = {m: self.nidx[m] for m in self.mboxes}

        # failure flags per step (F[t] = state before event t)
        F = {m: [FALSE] * (K + 1) for m in self.mboxes}
        for m in self.failable:
            for t in range(1, K + 1):
                F[m][t] = self.declare(f"F{mpos[m]}_{t}", "Bool")
        self.scen = []
        for t in range(K + 1):
            self.scen.append({fs: and_(*(F[m][t] if m in fs else not_(F[m][t]) for m in self.failable))
                              for fs, _ in self.tables[:-1]})

        regs = {m: self.reg_vars(mpos[m], minst[m], 0) for m in self.mboxes}
        k, eh, at, fr, fn, P = [], [], [], [], [], []
        slot = []  # slot[t][s] = dict(pkt, frm, to, prod, act, via[j], tgt)
        rv = []
        emit_flags = []
        for t in range(K):
            kt = self.declare(f"k_{t}")
            self.assert_(self.in_range(kt, IDLE, RECOVER))
            k.append(kt)
            eh.append(self.declare(f"eh_{t}"))
            at.append(self.declare(f"at_{t}"))
            fr.append(self.declare(f"fr_{t}"))
            fn.append(self.declare(f"fn_{t}"))
            pk = SPkt(tuple(SInt(self.declare(f"p_{t}_{f}"), FIELD_SORT[f]) for f in PACKET_FIELDS))
            P.append(pk)
            rv.append([self.declare(f"rv_{t}_{j}", "Bool") for j in range(len(self.vias))])
            is_emit, is_recv = eq_int(kt, num(EMIT)), eq_int(kt, num(RECV))
            is_fail, is_rec = eq_int(kt, num(FAIL)), eq_int(kt, num(RECOVER))
            emit_flags.append(is_emit)
            if t + 1 < K:
                self.assert_(implies(eq_int(kt, num(IDLE)), eq_int(f"k_{t + 1}", num(IDLE))))

            # emission
            nh = len(self.hosts)
            base = en.base
            emit_ok = [self.in_range(eh[t], 0, nh - 1) if nh else FALSE,
                       eq_int(pk.get("origin").term, pk.get("src").term),
                       self.in_range(pk.get("dst").term, 0, base["Address"] - 1),
                       not_(eq_int(pk.get("dst").term, pk.get("src").term)),
                       self.in_range(pk.get("src_port").term, 0, base["Port"] - 1),
                       self.in_range(pk.get("dst_port").term, 0, base["Port"] - 1),
                       self.in_range(pk.get("content").term, 0, base["Content"] - 1)]
            for hi, h in enumerate(self.hosts):
                emit_ok.append(implies(eq_int(eh[t], num(hi)),
                                       eq_int(pk.get("src").term, num(en.index("Address", net.address_of(h))))))
            self.assert_(implies(is_emit, and_(*emit_ok)))

            # receive: which middlebox, and its compiled step
            self.assert_(implies(is_recv, self.in_range(at[t], 0, len(self.nodes) - 1)))
            mouts = [[] for _ in range(S)]
            new_regs = {}
            for m in self.mboxes:
                mi = mpos[m]
                rx = self.define(f"rx{mi}_{t}", and_(is_recv, eq_int(at[t], num(mi))))
                outs, nxt = self.mbox_step(mi, minst[m], t, regs[m], pk, F[m][t], rx)
                for s in range(S):
                    mouts[s].extend(outs[s])
                new_regs[m] = nxt

            sender = self.define(f"snd_{t}", ite(is_emit, eh[t], at[t]), "Int")
            row = []
            for s in range(S):
                sp = SPkt(tuple(SInt(self.declare(f"sp_{t}_{s}_{f}"), FIELD_SORT[f]) for f in PACKET_FIELDS))
                if s == 0:
                    self.assert_(implies(is_emit, sym_eq(sp, pk, en)))
                for c, q in mouts[s]:
                    self.assert_(implies(c, sym_eq(sp, q, en)))
                prod = self.define(f"pr_{t}_{s}", or_(is_emit if s == 0 else FALSE,
                                                      *(c for c, _ in mouts[s])))
                to = self.define(f"to_{t}_{s}", self.route_at(t, sender, sp.get("dst").term), "Int")
                act = self.define(f"sa_{t}_{s}", and_(prod, f"(>= {to} 0)"))
                via = []
                for j, v in enumerate(self.vias):
                    here = or_(*(eq_int(at[t], num(mpos[m])) for m in self.mboxes
                                 if m == v or minst[m].type_name == v))
                    via.append(self.define(f"sv_{t}_{s}_{j}", and_(is_recv, or_(rv[t][j], here))))
                if target is None:
                    tgt = FALSE
                elif cond.target in self.hosts:
                    tgt = and_(is_emit, TRUE if s == 0 else FALSE, eq_int(eh[t], num(target)))
                else:
                    tgt = and_(is_recv, eq_int(at[t], num(target)), prod)
                row.append(dict(pkt=sp, frm=sender, to=to, act=act, via=via, tgt=tgt))
            slot.append(row)

            # register frame / update
            for m in self.mboxes:
                mi = mpos[m]
                killed = and_(is_fail, eq_int(fn[t], num(mi)))
                cur = regs[m]
                nxt = self.reg_vars(mi, minst[m], t + 1)
                for name, r in nxt.items():
                    upd = new_regs[m][name]
                    for ei in range(len(r.elems)):
                        self.assert_(iff(r.bits[ei], and_(not_(killed), upd.bits[ei])))
                        if r.vals is not None:
                            self.assert_(sym_eq(r.vals[ei], upd.vals[ei], en))
                regs[m] = nxt
                del cur

            # failures and recoveries
            fail_ok = [and_(eq_int(fn[t], num(mpos[m])), not_(F[m][t])) for m in self.failable]
            self.assert_(implies(is_fail, or_(*fail_ok)))
            if self.allow_recovery:
                self.assert_(implies(is_rec, or_(*(and_(eq_int(fn[t], num(mpos[m])), F[m][t])
                                                   for m in self.failable))))
            else:
                self.assert_(not_(is_rec))
            for m in self.failable:
                me = eq_int(fn[t], num(mpos[m]))
                self.assert_(iff(F[m][t + 1], ite(and_(is_fail, me), TRUE,
                                                 ite(and_(is_rec, me), FALSE, F[m][t]))))
            self.assert_(count([F[m][t + 1] for m in self.failable], self.budget))

        self.assert_(count(emit_flags, self.max_emits))

        # delivery: every receive consumes one earlier active slot, FIFO per link
        M = {}
        for t in range(K):
            mine = []
            for u in range(t):
                for s in range(S):
                    v = self.declare(f"M_{t}_{u}_{s}", "Bool")
                    M[(t, u, s)] = v
                    mine.append(v)
                    sl = slot[u][s]
                    self.assert_(implies(v, and_(
                        sl["act"], eq_int(fr[t], sl["frm"]), eq_int(at[t], sl["to"]),
                        sym_eq(P[t], sl["pkt"], en),
                        *(iff(rv[t][j], sl["via"][j]) for j in range(len(self.vias))))))
            is_recv = eq_int(k[t], num(RECV))
            self.assert_(iff(is_recv, or_(*mine)))
            self.assert_(count(mine, 1))
        for u in range(K):
            for s in range(S):
                self.assert_(count([M[(t, u, s)] for t in range(u + 1, K)], 1))
        order = [(u, s) for u in range(K) for s in range(S)]
        for i2, (u2, s2) in enumerate(order):
            for (u1, s1) in order[:i2]:
                a, b2 = slot[u1][s1], slot[u2][s2]
                same = and_(a["act"], eq_int(a["frm"], b2["frm"]), eq_int(a["to"], b2["to"]))
                for t in range(u2 + 1, K):
                    earlier = or_(*(M[(t2, u1, s1)] for t2 in range(u1 + 1, t)))
                    self.assert_(implies(and_(M[(t, u2, s2)], same), earlier))

        # the negated invariant
        viol = []
        if target is not None:
            for t in range(K):
                ctx = dict(t=t, pkt=P[t], rv=rv[t], slot=slot)
                viol.append(and_(eq_int(k[t], num(RECV)), eq_int(at[t], num(target)),
                                 self._pred(cond.predicate, ctx)))
        self.assert_(or_(*viol))
        self.meta.query = tuple(k + eh + at + fr + fn + [f.term for p in P for f in p.fields]
                                + [s.act for s in self.meta.sites]
                                + [v for s in self.meta.sites for a in s.arg_vars for v in a]
                                + [v for s in self.meta.sites for v in s.value_vars])
        self._consistency()
        text = "\n".join(self.lines + self.decls + self.asserts
                         + ["(check-sat)", "(get-value (" + " ".join(self.meta.query) + "))", ""])
        return SmtScript(text, "bounded", self.K, self._symbols(), self.meta)

    def _symbols(self) -> tuple:
        out = [(f"node={i}", n) for i, n in enumerate(self.nodes)]
        for sort, vals in self.en.values.items():
            out += [(f"{sort}={i}", v) for i, v in enumerate(vals)]
        out += [("k", "0 idle, 1 emit, 2 recv, 3 fail, 4 recover")]
        return tuple(out)

    def _pred(self, pred, ctx) -> str:
        en = self.en
        p = ctx["pkt"]
        if isinstance(pred, SrcEquals):
            return eq_int(p.get("src").term, num(en.index("Address", pred.address)))
        if isinstance(pred, OriginEquals):
            return eq_int(p.get("origin").term, num(en.index("Address", pred.address)))
        if isinstance(pred, NoPriorOutboundFlow):
            fl = flow_of_sym(p)
            return and_(*(not_(and_(sl["tgt"], sym_eq(flow_of_sym(sl["pkt"]), fl, en)))
                          for row in ctx["slot"][:ctx["t"]] for sl in row))
        if isinstance(pred, NotTraversed):
            return not_(ctx["rv"][self.vias.index(pred.via)])
        if isinstance(pred, PAnd):
            return and_(self._pred(pred.left, ctx), self._pred(pred.right, ctx))
        if isinstance(pred, POr):
            return or_(self._pred(pred.left, ctx), self._pred(pred.right, ctx))
        if isinstance(pred, PNot):
            return not_(self._pred(pred.inner, ctx))
        raise TypeError(pred)

    def _consistency(self):
        """Same oracle arguments give the same answer; distinct oracles are
        injective; excluded classes never hold together on one flow."""
        en = self.en
        sites = list(enumerate(self.meta.sites))
        excl = _excludes(self.net)

        def args_of(s):
            return tuple(unflatten(list(v), srt) for v, srt in zip(s.arg_vars, s.arg_sorts))
        for n1, (i, a) in enumerate(sites):
            for j, b in sites[n1 + 1:]:
                both = and_(a.act, b.act)
                if a.kind == "fn" and b.kind == "fn" and (a.inst, a.name) == (b.inst, b.name):
                    same_args = sym_eq(args_of(a), args_of(b), en)
                    same_val = and_(*(eq_int(x, y) for x, y in zip(a.value_vars, b.value_vars)))
                    self.assert_(implies(and_(both, same_args), same_val))
                    if self.distinct.get(i):
                        self.assert_(implies(and_(both, not_(same_args)), not_(same_val)))
                elif a.kind == "class" and b.kind == "class":
                    same_flow = sym_eq(args_of(a)[0], args_of(b)[0], en)
                    if a.name == b.name:
                        self.assert_(implies(and_(both, same_flow), iff(a.value_vars[0], b.value_vars[0])))
                    elif b.name in excl.get(a.name, ()):
                        self.assert_(implies(and_(both, same_flow),
                                             not_(and_(a.value_vars[0], b.value_vars[0]))))
        for i, a in sites:  # a class excluding itself never holds
            if a.kind == "class" and a.name in excl.get(a.name, ()):
                self.assert_(implies(a.act, not_(a.value_vars[0])))

    def _comments(self):
        for m in self.mboxes:
            for ax in axiom_templates(self.net.instance(m)):
                self.lines.append(f"; {ax.name}: {ax.text}")
        for ax in omega_axioms(self.net.transfer(frozenset())):
            self.lines.append(f"; {ax.name}: {ax.text}")


def _vias(pred) -> set:
    if isinstance(pred, NotTraversed):
        return {pred.via}
    if isinstance(pred, (PAnd, POr)):
        return _vias(pred.left) | _vias(pred.right)
    if isinstance(pred, PNot):
        return _vias(pred.inner)
    return set()


def encode_bounded(net, inv: Invariant, K: int, bounds: Bounds | None = None) -> SmtScript:
    """SMT-LIB2 script that is satisfiable iff some run of ``net`` with at
    most ``K`` events violates ``inv`` (within ``bounds``)."""
    b = bounds or Bounds(depth=K)
    return _Encoder(net, inv, K, b).encode()


# -- decoding ----------------------------------------------------------------------------

def _get(model: dict, name: str):
    if name in (TRUE, FALSE):
        return name == TRUE
    if name.lstrip("-").isdigit():
        return int(name)
    try:
        return model[name]
    except KeyError:
        raise ModelIncomplete(f"model has no value for {name}") from None


def _as_model(model) -> dict:
    from .solver import SolverError, parse_values
    if hasattr(model, "model"):
        model = model.model
    if isinstance(model, str):
        try:
            model = parse_values(model)
        except SolverError as e:
            raise ModelIncomplete(f"unreadable model: {e}") from None
    return model


def decoded_bindings(model, script: SmtScript) -> dict:
    model = _as_model(model)
    meta = script.meta
    en = meta.enums
    out = {}
    for s in meta.sites:
        if not _get(model, s.act):
            continue
        try:
            args = tuple(decode_value([_get(model, v) for v in vs], srt, en)
                         for vs, srt in zip(s.arg_vars, s.arg_sorts))
            if s.kind == "class":
                out[class_key(s.name, args[0])] = bool(_get(model, s.value_vars[0]))
            else:
                val = decode_value([_get(model, v) for v in s.value_vars], s.result, en)
                out[fn_key(s.inst, s.name, args)] = val
        except IndexError as e:
            raise ModelIncomplete(str(e)) from None
    return out


def decode_trace(model, net, inv: Invariant, script: SmtScript, universe=None) -> Trace:
    """Rebuild the violating run from a solver model (a Sat outcome, a
    ``{symbol: value}`` dict, or raw get-value text).

    The schedule and oracle answers come from the model; sends, paths and
    register snapshots are recomputed by executing the models, so the
    result replays.  The trace ends at the first violating delivery.
    """
    model = _as_model(model)
    if script.mode != "bounded":
        raise ValueError("only bounded scripts can be decoded")
    meta = script.meta
    en = meta.enums
    universe = universe or net.universe
    binds = decoded_bindings(model, script)
    excludes = _excludes(net)
    cond = negate(inv)
    types = {m.id: m.type_name for m in net.middleboxes}
    order = [m.id for m in net.middleboxes]
    states = {m.id: initial_state(m.model) for m in net.middleboxes}
    queues: dict = {}
    failed: set = set()
    tflows: set = set()
    events, snaps = [], []

    def pkt(t):
        try:
            vals = {f: en.value(FIELD_SORT[f], _get(model, f"p_{t}_{f}")) for f in PACKET_FIELDS}
        except IndexError as e:
            raise ModelIncomplete(str(e)) from None
        return Packet(**vals)

    def node(v):
        if not 0 <= v < len(meta.nodes):
            raise ModelIncomplete(f"node index {v} out of range")
        return meta.nodes[v]

    for t in range(meta.K):
        kind = _get(model, f"k_{t}")
        if kind == IDLE:
            break
        fz = frozenset(failed)
        if kind == EMIT:
            h, p = node(_get(model, f"eh_{t}")), pkt(t)
            to = net.route(h, p.dst, fz)
            events.append(HostEmit(t, h, p, to))
            if to is not None:
                queues.setdefault((h, to), []).append((p, ()))
            if h == cond.target:
                tflows.add(flow_of(p))
        elif kind == RECV:
            a, f, p = node(_get(model, f"at_{t}")), node(_get(model, f"fr_{t}")), pkt(t)
            q = queues.get((f, a))
            if not q or q[0][0] != p:
                raise ModelIncomplete(f"step {t}: {p} is not at the head of {f}->{a}")
            _, path = q.pop(0)
            inst = net.instance(a)
            outs = ()
            if inst is not None:
                try:
                    res = step(inst, states[a], p, BindingOracle(binds, excludes, strict=True), universe)
                except TraceDiverges as e:
                    raise ModelIncomplete(f"step {t}: {e}") from None
                states[a] = res.state
                outs = res.outputs
            sent = tuple((o, net.route(a, o.dst, fz)) for o in outs)
            events.append(Recv(t, a, f, p, sent, path))
            snaps.append(tuple((m, states[m]) for m in order))
            if cond.matches(a, p, DeliveryCtx(frozenset(tflows), path, types)):
                return Trace(tuple(events), tuple(snaps), tuple(sorted(binds.items(), key=repr)))
            for o, to in sent:
                if to is not None:
                    queues.setdefault((a, to), []).append((o, path + (a,)))
            if a == cond.target:
                tflows.update(flow_of(o) for o in outs)
            continue
        elif kind == FAIL:
            m = node(_get(model, f"fn_{t}"))
            failed.add(m)
            states[m] = fail_state(net.instance(m).model)
            events.append(Fail(t, m))
        elif kind == RECOVER:
            m = node(_get(model, f"fn_{t}"))
            failed.discard(m)
            states[m] = recover_state(states[m])
            events.append(Recover(t, m))
        else:
            raise ModelIncomplete(f"step {t}: unknown event kind {kind}")
        snaps.append(tuple((m, states[m]) for m in order))
    raise ModelIncomplete("decoded run does not reach a violation")
