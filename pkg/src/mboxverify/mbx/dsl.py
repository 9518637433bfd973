"""Parser for the guarded-command middlebox language.

Example (a learning firewall)::

    model learning_firewall(acl: Set[(Address, Address)]) {
      state established: Set[Flow]
      failure closed
      when established.contains(flow(p)) => { forward(p) }
      when acl.contains((p.src, p.dst)) => {
        established += flow(p)
        forward(p)
      }
      otherwise => { drop }
    }
"""
from __future__ import annotations

import re

from ..core import PACKET_FIELDS
from . import ast as A


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} at line {line}, column {col}")
        self.line = line
        self.col = col


class SemanticError(Exception):
    def __init__(self, msg: str, symbol: str):
        super().__init__(f"{msg}: {symbol!r}")
        self.symbol = symbol


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<str>'[^'\n]*'|"[^"\n]*")
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>=>|:=|\+=|==|!=|&&|\|\||[{}()\[\],:.;!?=])
""", re.VERBOSE)


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col

    def __repr__(self):
        return f"{self.kind}:{self.text}@{self.line}:{self.col}"


def tokenize(src: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, text, line, pos - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


_FIELD_SET = set(PACKET_FIELDS)


class _Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0

    # token helpers
    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k=1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.cur
        return ParseError(msg, tok.line, tok.col)

    def at(self, text) -> bool:
        t = self.cur
        return t.text == text and t.kind in ("op", "ident")

    def accept(self, text) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text) -> _Tok:
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {self.cur.text or 'end of input'!r}")
        tok = self.cur
        self.i += 1
        return tok

    def ident(self) -> str:
        if self.cur.kind != "ident":
            raise self.error(f"expected identifier, found {self.cur.text or 'end of input'!r}")
        tok = self.cur
        self.i += 1
        return tok.text

    # grammar
    def model(self) -> A.MiddleboxModel:
        self.expect("model")
        name = self.ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                pname = self.ident()
                self.expect(":")
                params.append((pname, self.sort()))
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("{")
        regs, oracles, classes, failure = [], [], [], None
        while True:
            if self.accept("state"):
                rname = self.ident()
                self.expect(":")
                regs.append(A.RegisterDecl(rname, self.sort()))
            elif self.accept("oracle"):
                oracles.append(self.oracle_decl())
            elif self.accept("class"):
                cname = self.ident()
                excl = []
                while self.accept("excludes"):
                    excl.append(self.ident())
                classes.append(A.ClassDecl(cname, tuple(excl)))
            elif self.at("failure"):
                tok = self.expect("failure")
                if failure is not None:
                    raise self.error("duplicate failure declaration", tok)
                mode = self.ident()
                if mode not in ("closed", "open", "explicit"):
                    raise self.error(f"unknown failure mode {mode!r}")
                failure = mode
            else:
                break
        rules = []
        saw_otherwise = False
        while not self.at("}"):
            if saw_otherwise:
                raise self.error("rule after otherwise")
            if self.accept("when"):
                guard = self.expr()
            elif self.accept("otherwise"):
                guard = None
                saw_otherwise = True
            else:
                raise self.error(f"expected 'when' or 'otherwise', found {self.cur.text!r}")
            self.expect("=>")
            actions, term = self.body()
            rules.append(A.Rule(guard, actions, term))
        self.expect("}")
        if self.cur.kind != "eof":
            raise self.error("trailing input after model")
        return A.MiddleboxModel(
            name=name, params=tuple(params), registers=tuple(regs), oracles=tuple(oracles),
            classes=tuple(classes), failure=failure or A.FailurePolicy.CLOSED, rules=tuple(rules),
        )

    def oracle_decl(self) -> A.OracleFnDecl:
        name = self.ident()
        self.expect("(")
        args = []
        if not self.at(")"):
            while True:
                args.append(self.sort())
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect(":")
        result = self.sort()
        self.expect("range")
        if self.accept("{"):
            vals = []
            while not self.at("}"):
                vals.append(self.literal())
                if not self.accept(","):
                    break
            self.expect("}")
            rng = tuple(vals)
        else:
            rname = self.ident()
            rng = A.SortName(rname) if rname in A.BASE_SORTS else A.Var(rname)
        distinct = self.accept("distinct")
        return A.OracleFnDecl(name, tuple(args), result, rng, distinct)

    def literal(self) -> str:
        tok = self.cur
        if tok.kind == "str":
            self.i += 1
            return tok.text[1:-1]
        if tok.kind in ("num", "ident"):
            self.i += 1
            return tok.text
        raise self.error("expected literal")

    def sort(self):
        if self.accept("("):
            items = [self.sort()]
            while self.accept(","):
                items.append(self.sort())
            self.expect(")")
            return items[0] if len(items) == 1 else A.TupleSort(tuple(items))
        name = self.ident()
        if name == "Set":
            self.expect("[")
            elem = self.sort()
            self.expect("]")
            return A.SetSort(elem)
        if name == "Map":
            self.expect("[")
            key = self.sort()
            self.expect(",")
            val = self.sort()
            self.expect("]")
            return A.MapSort(key, val)
        if name not in A.BASE_SORTS:
            raise self.error(f"unknown sort {name!r}", self.toks[self.i - 1])
        return A.SortName(name)

    def body(self):
        self.expect("{")
        actions = []
        term = None
        while True:
            self.accept(";")
            if term is not None:
                self.expect("}")
                return tuple(actions), term
            if self.accept("drop"):
                term = A.Drop()
            elif self.accept("forward"):
                self.expect("(")
                pkts = [self.pkt()]
                while self.accept(","):
                    pkts.append(self.pkt())
                self.expect(")")
                term = A.Forward(tuple(pkts))
            elif self.at("}"):
                raise self.error("rule body must end with forward(...) or drop")
            else:
                actions.append(self.action())

    def action(self):
        if self.accept("let"):
            if self.accept("("):
                names = [self.ident()]
                while self.accept(","):
                    names.append(self.ident())
                self.expect(")")
            else:
                names = [self.ident()]
            self.expect("=")
            return A.Let(tuple(names), self.expr())
        if self.at("p") and self.peek().text == ".":
            self.i += 2
            fld = self.field_name()
            self.expect(":=")
            return A.FieldAssign(fld, self.expr())
        name = self.ident()
        if self.accept("+="):
            return A.SetAdd(name, self.expr())
        if self.accept("["):
            key = self.expr()
            self.expect("]")
            self.expect(":=")
            return A.MapPut(name, key, self.expr())
        raise self.error(f"expected action after {name!r}")

    def field_name(self) -> str:
        tok = self.cur
        fld = self.ident()
        if fld not in _FIELD_SET:
            raise self.error(f"unknown packet field {fld!r}", tok)
        return fld

    def pkt(self) -> A.PktExpr:
        tok = self.cur
        e = self.expr()
        if not isinstance(e, A.PktExpr):
            raise self.error("expected packet expression", tok)
        return e

    # expressions
    def expr(self):
        left = self.and_expr()
        while self.accept("||"):
            left = A.Or(left, self.and_expr())
        return left

    def and_expr(self):
        left = self.unary()
        while self.accept("&&"):
            left = A.And(left, self.unary())
        return left

    def unary(self):
        if self.accept("!"):
            return A.Not(self.unary())
        left = self.postfix()
        if self.accept("=="):
            return A.Eq(left, self.postfix())
        if self.accept("!="):
            return A.Ne(left, self.postfix())
        return left

    def postfix(self):
        e = self.primary()
        while self.at(".") and self.peek().kind == "num":
            self.i += 1
            e = A.Proj(e, int(self.cur.text))
            self.i += 1
        return e

    def primary(self):
        tok = self.cur
        if self.accept("("):
            items = [self.expr()]
            while self.accept(","):
                items.append(self.expr())
            self.expect(")")
            return items[0] if len(items) == 1 else A.TupleE(tuple(items))
        if tok.kind == "str":
            self.i += 1
            return A.Lit(tok.text[1:-1])
        if tok.kind == "num":
            self.i += 1
            return A.Lit(tok.text)
        if tok.kind != "ident":
            raise self.error(f"unexpected {tok.text or 'end of input'!r}")
        name = tok.text
        nxt = self.peek().text
        if name == "true":
            self.i += 1
            return A.TrueG()
        if name == "fail" and nxt == "(":
            self.i += 2
            self.expect("self")
            self.expect(")")
            return A.FailSelf()
        if name == "flow" and nxt == "(":
            self.i += 2
            pk = self.pkt()
            self.expect(")")
            return A.FlowE(pk)
        if name == "p":
            self.i += 1
            if self.at(".") and self.peek().kind == "ident":
                self.i += 1
                return A.PField(self.field_name())
            if self.accept("{"):
                overrides = []
                while not self.at("}"):
                    fld = self.field_name()
                    self.expect("=")
                    overrides.append((fld, self.expr()))
                    if not self.accept(","):
                        break
                self.expect("}")
                return A.PktExpr(tuple(overrides))
            return A.PktExpr()
        self.i += 1
        if self.accept("?"):
            self.expect("(")
            pk = self.pkt()
            self.expect(")")
            return A.ClassP(name, pk)
        if self.at(".") and self.peek().text == "contains":
            self.i += 2
            self.expect("(")
            elem = self.expr()
            self.expect(")")
            return A.Contains(name, elem)
        if self.accept("["):
            key = self.expr()
            self.expect("]")
            return A.Lookup(name, key)
        if self.accept("("):
            args = []
            if not self.at(")"):
                while True:
                    args.append(self.expr())
                    if not self.accept(","):
                        break
            self.expect(")")
            return A.Call(name, tuple(args))
        return A.Var(name)


def parse_model(text: str) -> A.MiddleboxModel:
    """Parse and check one model; raises ParseError or SemanticError."""
    model = _Parser(text).model()
    check_model(model)
    return model


# -- semantic checks -------------------------------------------------------

def check_model(m: A.MiddleboxModel) -> None:
    seen: set[str] = set()
    for kind, names in (("parameter", [n for n, _ in m.params]),
                        ("register", [r.name for r in m.registers]),
                        ("oracle", [o.name for o in m.oracles]),
                        ("class", [c.name for c in m.classes])):
        for n in names:
            if n in seen:
                raise SemanticError(f"duplicate {kind}", n)
            seen.add(n)
    for r in m.registers:
        if not isinstance(r.sort, (A.SetSort, A.MapSort)):
            raise SemanticError("register must be a Set or Map", r.name)
    class_names = {c.name for c in m.classes}
    for c in m.classes:
        for other in c.excludes:
            if other not in class_names:
                raise SemanticError("undeclared class", other)
    for o in m.oracles:
        if isinstance(o.range, A.Var):
            if not isinstance(m.param_sort(o.range.name), A.SetSort):
                raise SemanticError("oracle range must be a Set parameter", o.range.name)
        elif isinstance(o.range, tuple) and not o.range:
            raise SemanticError("empty oracle range", o.name)
    if not m.rules or m.rules[-1].guard is not None:
        raise SemanticError("missing otherwise-rule", m.name)
    for rule in m.rules:
        scope: set[str] = set()
        if rule.guard is not None:
            _check_expr(m, rule.guard, scope)
        for act in rule.actions:
            _check_action(m, act, scope)
        if isinstance(rule.terminator, A.Forward):
            for pk in rule.terminator.pkts:
                _check_expr(m, pk, scope)


def _check_action(m, act, scope):
    if isinstance(act, A.Let):
        _check_expr(m, act.expr, scope)
        for n in act.names:
            if m.param_sort(n) is not None or m.register(n) is not None:
                raise SemanticError("local shadows a declared name", n)
        scope.update(act.names)
    elif isinstance(act, A.FieldAssign):
        _check_expr(m, act.expr, scope)
    elif isinstance(act, A.SetAdd):
        r = m.register(act.reg)
        if r is None:
            raise SemanticError("undeclared register", act.reg)
        if r.is_map:
            raise SemanticError("+= on a Map register", act.reg)
        _check_expr(m, act.elem, scope)
    elif isinstance(act, A.MapPut):
        r = m.register(act.reg)
        if r is None:
            raise SemanticError("undeclared register", act.reg)
        if not r.is_map:
            raise SemanticError("indexed assignment on a Set register", act.reg)
        _check_expr(m, act.key, scope)
        _check_expr(m, act.value, scope)


def _check_expr(m, e, scope):
    if isinstance(e, A.Var):
        if e.name not in scope and m.param_sort(e.name) is None:
            raise SemanticError("undeclared symbol", e.name)
    elif isinstance(e, (A.Lit, A.PField, A.TrueG, A.FailSelf)):
        pass
    elif isinstance(e, A.PktExpr):
        for _, sub in e.overrides:
            _check_expr(m, sub, scope)
    elif isinstance(e, A.TupleE):
        for sub in e.items:
            _check_expr(m, sub, scope)
    elif isinstance(e, A.Proj):
        _check_expr(m, e.expr, scope)
    elif isinstance(e, A.FlowE):
        _check_expr(m, e.pkt, scope)
    elif isinstance(e, A.Lookup):
        r = m.register(e.reg)
        if r is None or not r.is_map:
            raise SemanticError("lookup on a non-Map symbol", e.reg)
        _check_expr(m, e.key, scope)
    elif isinstance(e, A.Call):
        o = m.oracle(e.fn)
        if o is None:
            raise SemanticError("undeclared oracle function", e.fn)
        if len(o.arg_sorts) != len(e.args):
            raise SemanticError("wrong number of oracle arguments", e.fn)
        for sub in e.args:
            _check_expr(m, sub, scope)
    elif isinstance(e, A.Contains):
        r = m.register(e.name)
        if r is None and not isinstance(m.param_sort(e.name), A.SetSort):
            raise SemanticError("contains on an undeclared set", e.name)
        _check_expr(m, e.elem, scope)
    elif isinstance(e, A.ClassP):
        if e.name not in {c.name for c in m.classes}:
            raise SemanticError("undeclared class", e.name)
        _check_expr(m, e.pkt, scope)
    elif isinstance(e, (A.Eq, A.Ne, A.And, A.Or)):
        _check_expr(m, e.left, scope)
        _check_expr(m, e.right, scope)
    elif isinstance(e, A.Not):
        _check_expr(m, e.expr, scope)
    else:  # pragma: no cover
        raise SemanticError("unknown expression", type(e).__name__)
