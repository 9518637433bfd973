"""Concrete execution of middlebox models."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol

from ..core import Packet, Universe, flow_of
from . import ast as A


class MapLookupMiss(Exception):
    def __init__(self, reg, key):
        super().__init__(f"lookup of absent key {key!r} in {reg}")
        self.reg = reg
        self.key = key


class OracleValueOutOfRange(Exception):
    pass


@dataclass(frozen=True)
class MiddleboxInstance:
    id: str
    model: A.MiddleboxModel
    config: tuple = ()  # ((param, value), ...) in declaration order
    hint: str = "auto"

    @property
    def config_map(self) -> dict:
        return dict(self.config)

    @property
    def type_name(self) -> str:
        return self.model.name


def _freeze(v):
    if isinstance(v, (list, tuple)):
        return tuple(_freeze(x) for x in v)
    return str(v)


def instantiate(inst_id: str, model: A.MiddleboxModel, config: dict,
                universe: Universe | None = None, hint: str = "auto") -> MiddleboxInstance:
    """Bind configuration values; sets become frozensets of (nested) tuples."""
    missing = [n for n, _ in model.params if n not in config]
    if missing:
        raise ValueError(f"{inst_id}: missing config parameter(s) {missing}")
    extra = sorted(set(config) - {n for n, _ in model.params})
    if extra:
        raise ValueError(f"{inst_id}: unknown config parameter(s) {extra}")
    bound = []
    for name, sort in model.params:
        raw = config[name]
        if isinstance(sort, A.SetSort):
            if isinstance(raw, (set, frozenset)):
                raw = list(raw)
            val = frozenset(_freeze(x) for x in raw)
        else:
            val = _freeze(raw)
        if universe is not None:
            _check_universe(inst_id, name, sort, val, universe)
        bound.append((name, val))
    return MiddleboxInstance(inst_id, model, tuple(bound), hint)


def _check_universe(inst_id, name, sort, val, u: Universe):
    allowed = {k: frozenset(u.sort_values(k, fresh=True)) for k in ("Address", "Port", "Content")}

    def ok(s, v):
        if isinstance(s, A.SetSort):
            return all(ok(s.elem, x) for x in v)
        if isinstance(s, A.TupleSort):
            return isinstance(v, tuple) and len(v) == len(s.items) and all(
                ok(si, vi) for si, vi in zip(s.items, v))
        if isinstance(s, A.SortName) and s.name in allowed:
            return v in allowed[s.name]
        return True
    if not ok(sort, val):
        raise ValueError(f"{inst_id}: config {name} uses values outside the universe")


@dataclass(frozen=True)
class MbxState:
    """Register valuation of one instance: one frozenset per declared register
    (maps hold frozensets of (key, value) pairs), plus the failed flag."""

    regs: tuple = ()
    failed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.regs, self.failed)))

    def __hash__(self):
        return self._hash

    def register(self, model: A.MiddleboxModel, name: str):
        for decl, val in zip(model.registers, self.regs):
            if decl.name == name:
                return dict(val) if decl.is_map else val
        raise KeyError(name)

    def as_dict(self, model: A.MiddleboxModel) -> dict:
        return {d.name: (dict(v) if d.is_map else v) for d, v in zip(model.registers, self.regs)}

    @property
    def is_empty(self) -> bool:
        return not any(self.regs)


def initial_state(model: A.MiddleboxModel) -> MbxState:
    return MbxState(tuple(frozenset() for _ in model.registers), False)


def fail_state(model: A.MiddleboxModel) -> MbxState:
    """State entered on failure: registers are volatile and cleared."""
    return MbxState(initial_state(model).regs, True)


def recover_state(st: MbxState) -> MbxState:
    return MbxState(st.regs, False)


class OracleEnv(Protocol):
    def class_bit(self, name: str, packet: Packet) -> bool: ...

    def value(self, inst_id: str, fn: str, args: tuple, options: tuple, distinct: bool) -> Any: ...


@dataclass
class FixedOracle:
    """Oracle backed by a plain table; class bits default to ``packet.classes``.

    ``default`` (a callable ``(inst, fn, args, options) -> value``) is used for
    calls absent from ``values``.
    """

    values: dict = field(default_factory=dict)
    classes: dict = field(default_factory=dict)
    default: Any = None

    def class_bit(self, name, packet):
        key = (name, flow_of(packet))
        if key in self.classes:
            return self.classes[key]
        return name in packet.classes

    def value(self, inst_id, fn, args, options, distinct):
        key = (inst_id, fn, args)
        if key in self.values:
            return self.values[key]
        if self.default is None:
            raise OracleValueOutOfRange(f"no oracle value for {fn}{args}")
        return self.default(inst_id, fn, args, options)


@dataclass(frozen=True)
class StepResult:
    state: MbxState
    outputs: tuple  # packets handed to the network for routing
    rule: int | None  # index of fired rule; None when the failure policy decided


class _Ctx:
    __slots__ = ("inst", "model", "cfg", "regs", "locals", "p", "oracle", "universe", "failed")

    def __init__(self, inst, regs, p, oracle, universe, failed):
        self.inst = inst
        self.model = inst.model
        self.cfg = inst.config_map
        self.regs = regs
        self.locals = {}
        self.p = p
        self.oracle = oracle
        self.universe = universe
        self.failed = failed


def step(inst: MiddleboxInstance, st: MbxState, p: Packet, oracle: OracleEnv,
         universe: Universe | None = None) -> StepResult:
    """Process one received packet. Pure in (inst, st, p, oracle)."""
    model = inst.model
    if st.failed and model.failure == A.FailurePolicy.CLOSED:
        return StepResult(st, (), None)
    if st.failed and model.failure == A.FailurePolicy.OPEN:
        return StepResult(st, (p,), None)
    regs = {d.name: (dict(v) if d.is_map else set(v)) for d, v in zip(model.registers, st.regs)}
    for idx, rule in enumerate(model.rules):
        ctx = _Ctx(inst, regs, p, oracle, universe, st.failed)
        if rule.guard is not None and not eval_expr(rule.guard, ctx):
            continue
        for act in rule.actions:
            _exec(act, ctx)
        outs = ()
        if isinstance(rule.terminator, A.Forward):
            outs = tuple(eval_expr(pk, ctx) for pk in rule.terminator.pkts)
        new = MbxState(tuple(
            frozenset(regs[d.name].items()) if d.is_map else frozenset(regs[d.name])
            for d in model.registers), st.failed)
        return StepResult(new, outs, idx)
    raise AssertionError("model without otherwise-rule")  # pragma: no cover


def eval_guard(inst: MiddleboxInstance, st: MbxState, guard, p: Packet, oracle: OracleEnv,
               universe: Universe | None = None) -> bool:
    """Evaluate a guard in state ``st`` without executing any action."""
    regs = {d.name: (dict(v) if d.is_map else set(v)) for d, v in zip(inst.model.registers, st.regs)}
    return bool(eval_expr(guard, _Ctx(inst, regs, p, oracle, universe, st.failed)))


def _exec(act, ctx: _Ctx):
    if isinstance(act, A.Let):
        val = eval_expr(act.expr, ctx)
        if len(act.names) == 1:
            ctx.locals[act.names[0]] = val
        else:
            if not isinstance(val, tuple) or len(val) != len(act.names):
                raise TypeError(f"cannot destructure {val!r} into {act.names}")
            ctx.locals.update(zip(act.names, val))
    elif isinstance(act, A.FieldAssign):
        ctx.p = ctx.p.with_fields(**{act.field: eval_expr(act.expr, ctx)})
    elif isinstance(act, A.SetAdd):
        ctx.regs[act.reg].add(eval_expr(act.elem, ctx))
    elif isinstance(act, A.MapPut):
        key = eval_expr(act.key, ctx)
        ctx.regs[act.reg][key] = eval_expr(act.value, ctx)
    else:  # pragma: no cover
        raise TypeError(act)


def oracle_range(decl: A.OracleFnDecl, cfg: dict, universe: Universe | None) -> tuple:
    rng = decl.range
    if isinstance(rng, tuple):
        return rng
    if isinstance(rng, A.Var):
        return tuple(sorted(cfg[rng.name], key=repr))
    if universe is None:
        raise OracleValueOutOfRange(f"range {rng.name} needs a universe")
    return universe.sort_values(rng.name)


def eval_expr(e, ctx: _Ctx):
    t = type(e)
    if t is A.PField:
        return getattr(ctx.p, e.field)
    if t is A.Var:
        if e.name in ctx.locals:
            return ctx.locals[e.name]
        return ctx.cfg[e.name]
    if t is A.Lit:
        return e.value
    if t is A.PktExpr:
        if not e.overrides:
            return ctx.p
        return ctx.p.with_fields(**{f: eval_expr(sub, ctx) for f, sub in e.overrides})
    if t is A.FlowE:
        return flow_of(eval_expr(e.pkt, ctx))
    if t is A.TupleE:
        return tuple(eval_expr(x, ctx) for x in e.items)
    if t is A.Proj:
        return eval_expr(e.expr, ctx)[e.index]
    if t is A.Contains:
        elem = eval_expr(e.elem, ctx)
        if e.name in ctx.regs:
            return elem in ctx.regs[e.name]
        return elem in ctx.cfg[e.name]
    if t is A.Lookup:
        key = eval_expr(e.key, ctx)
        table = ctx.regs[e.reg]
        if key not in table:
            raise MapLookupMiss(e.reg, key)
        return table[key]
    if t is A.Eq:
        return eval_expr(e.left, ctx) == eval_expr(e.right, ctx)
    if t is A.Ne:
        return eval_expr(e.left, ctx) != eval_expr(e.right, ctx)
    if t is A.And:
        return eval_expr(e.left, ctx) and eval_expr(e.right, ctx)
    if t is A.Or:
        return eval_expr(e.left, ctx) or eval_expr(e.right, ctx)
    if t is A.Not:
        return not eval_expr(e.expr, ctx)
    if t is A.TrueG:
        return True
    if t is A.FailSelf:
        return ctx.failed
    if t is A.ClassP:
        return bool(ctx.oracle.class_bit(e.name, eval_expr(e.pkt, ctx)))
    if t is A.Call:
        decl = ctx.model.oracle(e.fn)
        args = tuple(eval_expr(a, ctx) for a in e.args)
        options = oracle_range(decl, ctx.cfg, ctx.universe)
        val = ctx.oracle.value(ctx.inst.id, e.fn, args, options, decl.distinct)
        if val not in options:
            raise OracleValueOutOfRange(f"{e.fn}{args} = {val!r} not in {options}")
        return val
    raise TypeError(f"cannot evaluate {e!r}")  # pragma: no cover
