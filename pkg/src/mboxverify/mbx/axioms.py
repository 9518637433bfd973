"""Per-instance LTL axiom templates derived from a model's rules.

Each register gets a state axiom (every element was written by some rule
that fired since the last failure) and each instance a send axiom (every
packet put on the wire is the output of a fired forwarding rule).  The
rendered text uses instance-suffixed symbols, e.g. ``established_fw1``.
"""
from __future__ import annotations

from ..formula import FormulaTemplate
from . import ast as A
from .interp import MiddleboxInstance, fail_state, initial_state, recover_state, step


def _sym(name: str, inst: MiddleboxInstance) -> str:
    return f"{name}_{inst.id}"


def render_expr(e, inst: MiddleboxInstance, env: dict | None = None, fields: dict | None = None) -> str:
    """Render ``e``; ``env`` maps let-bound names and ``fields`` holds packet
    fields already rewritten by earlier actions."""
    env = env or {}
    fields = fields or {}
    r = lambda x: render_expr(x, inst, env, fields)  # noqa: E731
    t = type(e)
    if t is A.PField:
        return fields.get(e.field, f"{e.field}(p)")
    if t is A.Var:
        if e.name in env:
            return env[e.name]
        return _sym(e.name, inst) if inst.model.param_sort(e.name) is not None else e.name
    if t is A.Lit:
        return repr(e.value)
    if t is A.PktExpr:
        over = dict(fields)
        over.update((f, r(x)) for f, x in e.overrides)
        if not over:
            return "p"
        return "p{" + ", ".join(f"{f} = {v}" for f, v in over.items()) + "}"
    if t is A.FlowE:
        return f"flow({r(e.pkt)})"
    if t is A.TupleE:
        return "(" + ", ".join(r(x) for x in e.items) + ")"
    if t is A.Proj:
        return f"{r(e.expr)}.{e.index}"
    if t is A.Contains:
        return f"{_sym(e.name, inst)}({r(e.elem)})"
    if t is A.Lookup:
        return f"{_sym(e.reg, inst)}[{r(e.key)}]"
    if t is A.Call:
        return f"{_sym(e.fn, inst)}(" + ", ".join(r(x) for x in e.args) + ")"
    if t is A.Eq:
        return f"{r(e.left)} = {r(e.right)}"
    if t is A.Ne:
        return f"{r(e.left)} ≠ {r(e.right)}"
    if t is A.And:
        return f"({r(e.left)} ∧ {r(e.right)})"
    if t is A.Or:
        return f"({r(e.left)} ∨ {r(e.right)})"
    if t is A.Not:
        return f"¬{r(e.expr)}"
    if t is A.TrueG:
        return "⊤"
    if t is A.FailSelf:
        return f"fail({inst.id})"
    if t is A.ClassP:
        return f"{e.name}?({r(e.pkt)})"
    raise TypeError(e)  # pragma: no cover


def _firing(inst, i: int) -> str:
    """Condition under which rule ``i`` fires: its guard and no earlier guard."""
    parts = [f"¬{render_expr(r.guard, inst)}" for r in inst.model.rules[:i] if r.guard is not None]
    g = inst.model.rules[i].guard
    if g is not None:
        parts.append(render_expr(g, inst))
    return " ∧ ".join(parts) or "⊤"


def _symbolic_run(inst, rule: A.Rule):
    """Rendered register writes and outputs of ``rule`` in terms of the received p."""
    env: dict = {}
    fields: dict = {}
    writes = []
    for a in rule.actions:
        if isinstance(a, A.Let):
            v = render_expr(a.expr, inst, env, fields)
            if len(a.names) == 1:
                env[a.names[0]] = v
            else:
                env.update((n, f"{v}.{i}") for i, n in enumerate(a.names))
        elif isinstance(a, A.FieldAssign):
            fields[a.field] = render_expr(a.expr, inst, env, fields)
        elif isinstance(a, A.SetAdd):
            writes.append((a.reg, render_expr(a.elem, inst, env, fields)))
        elif isinstance(a, A.MapPut):
            writes.append((a.reg, f"({render_expr(a.key, inst, env, fields)}, "
                                  f"{render_expr(a.value, inst, env, fields)})"))
    outs = []
    if isinstance(rule.terminator, A.Forward):
        outs = [render_expr(pk, inst, env, fields) for pk in rule.terminator.pkts]
    return writes, outs


# -- evaluators ----------------------------------------------------------------

def _runs(trace, inst):
    """(event, state before, state after) for every event touching ``inst``."""
    model = inst.model
    st = initial_state(model)
    for i, e in enumerate(trace.events):
        before = st
        if e.kind == "fail" and e.node == inst.id:
            st = fail_state(model)
        elif e.kind == "recover" and e.node == inst.id:
            st = recover_state(st)
        if i < len(trace.registers):
            st = dict(trace.registers[i]).get(inst.id, st)
        yield e, before, st


def _state_eval(inst, reg: str):
    from ..bmc import BindingOracle

    def ev(trace, net):
        binds = dict(trace.bindings)
        live: set = set()  # elements justified since the last failure
        for e, before, after in _runs(trace, inst):
            if e.kind == "fail" and e.node == inst.id:
                live = set()
            elif e.kind == "recv" and e.at == inst.id:
                try:
                    res = step(inst, before, e.packet, BindingOracle(binds, {}, strict=True),
                               net.universe)
                except Exception:
                    return False
                live |= set(res.state.register(inst.model, reg) if not _is_map(inst, reg)
                            else dict(res.state.register(inst.model, reg)).items())
            cur = after.register(inst.model, reg)
            items = set(cur.items()) if isinstance(cur, dict) else set(cur)
            if not items <= live:
                return False
        return True
    return ev


def _is_map(inst, reg):
    return inst.model.register(reg).is_map


def _send_eval(inst):
    from ..bmc import BindingOracle

    def ev(trace, net):
        binds = dict(trace.bindings)
        for e, before, _ in _runs(trace, inst):
            if e.kind != "recv" or e.at != inst.id:
                continue
            try:
                res = step(inst, before, e.packet, BindingOracle(binds, {}, strict=True), net.universe)
            except Exception:
                return False
            if tuple(q for q, _ in e.sent) != res.outputs:
                return False
        return True
    return ev


def axiom_templates(inst: MiddleboxInstance) -> list[FormulaTemplate]:
    model = inst.model
    out = []
    for reg in model.registers:
        writers = []
        for i, rule in enumerate(model.rules):
            for name, elem in _symbolic_run(inst, rule)[0]:
                if name == reg.name:
                    writers.append(f"◇(rcv({inst.id}, p) ∧ {_firing(inst, i)} ∧ x = {elem})")
        body = " ∨ ".join(writers) or "⊥"
        text = (f"∀x: □ ({_sym(reg.name, inst)}(x) ⇒ "
                f"(¬fail({inst.id}) S ({body})))")
        out.append(FormulaTemplate(f"state[{inst.id}.{reg.name}]", "state", inst.id, text,
                                   frozenset({_sym(reg.name, inst)}), _state_eval(inst, reg.name)))
    sends = []
    for i, rule in enumerate(model.rules):
        for q in _symbolic_run(inst, rule)[1]:
            sends.append(f"({_firing(inst, i)} ∧ q = {q})")
    body = " ∨ ".join(sends) or "⊥"
    text = f"∀n, q: □ (snd({inst.id}, n, q) ⇒ ∃p: ◇rcv({inst.id}, p) ∧ ({body}))"
    syms = {_sym(r.name, inst) for r in model.registers} | {_sym(o.name, inst) for o in model.oracles}
    out.append(FormulaTemplate(f"send[{inst.id}]", "send", inst.id, text, frozenset(syms),
                               _send_eval(inst)))
    return out
