"""Syntax tree for middlebox models.

All nodes are frozen dataclasses so that two parses of the same source
compare equal and models can be used as dictionary keys.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

# -- sorts -------------------------------------------------------------------

BASE_SORTS = ("Address", "Port", "Content", "Flow", "Packet")


@dataclass(frozen=True)
class SortName:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class TupleSort:
    items: tuple

    def __str__(self):
        return "(" + ", ".join(map(str, self.items)) + ")"


@dataclass(frozen=True)
class SetSort:
    elem: object

    def __str__(self):
        return f"Set[{self.elem}]"


@dataclass(frozen=True)
class MapSort:
    key: object
    value: object

    def __str__(self):
        return f"Map[{self.key}, {self.value}]"


Sort = Union[SortName, TupleSort, SetSort, MapSort]

# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    """A config parameter or a rule-local binding."""

    name: str


@dataclass(frozen=True)
class Lit:
    value: str


@dataclass(frozen=True)
class PField:
    """``p.<field>`` of the packet being processed (after earlier assignments)."""

    field: str


@dataclass(frozen=True)
class PktExpr:
    """The current packet, optionally with some fields overridden."""

    overrides: tuple = ()  # ((field, expr), ...)


@dataclass(frozen=True)
class TupleE:
    items: tuple


@dataclass(frozen=True)
class Proj:
    expr: object
    index: int


@dataclass(frozen=True)
class FlowE:
    pkt: PktExpr


@dataclass(frozen=True)
class Lookup:
    reg: str
    key: object


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


# -- guards ------------------------------------------------------------------


@dataclass(frozen=True)
class Eq:
    left: object
    right: object


@dataclass(frozen=True)
class Ne:
    left: object
    right: object


@dataclass(frozen=True)
class Contains:
    """``name.contains(expr)``: set membership or map key presence."""

    name: str
    elem: object


@dataclass(frozen=True)
class ClassP:
    name: str
    pkt: PktExpr = PktExpr()


@dataclass(frozen=True)
class FailSelf:
    pass


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    expr: object


@dataclass(frozen=True)
class TrueG:
    pass


# -- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class SetAdd:
    reg: str
    elem: object


@dataclass(frozen=True)
class MapPut:
    reg: str
    key: object
    value: object


@dataclass(frozen=True)
class FieldAssign:
    field: str
    expr: object


@dataclass(frozen=True)
class Let:
    names: tuple
    expr: object


@dataclass(frozen=True)
class Forward:
    pkts: tuple


@dataclass(frozen=True)
class Drop:
    pass


# -- declarations ------------------------------------------------------------


@dataclass(frozen=True)
class RegisterDecl:
    name: str
    sort: object  # SetSort | MapSort
    volatile: bool = True

    @property
    def is_map(self) -> bool:
        return isinstance(self.sort, MapSort)


@dataclass(frozen=True)
class OracleFnDecl:
    name: str
    arg_sorts: tuple
    result: object
    range: object  # Var (config set) | SortName (whole universe) | tuple of literals
    distinct: bool = False


@dataclass(frozen=True)
class ClassDecl:
    name: str
    excludes: tuple = ()


@dataclass(frozen=True)
class Rule:
    guard: object  # None for the otherwise-rule
    actions: tuple
    terminator: object  # Forward | Drop

    @property
    def out_count(self) -> int:
        return len(self.terminator.pkts) if isinstance(self.terminator, Forward) else 0


class FailurePolicy:
    CLOSED = "closed"
    OPEN = "open"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class MiddleboxModel:
    name: str
    params: tuple  # ((name, sort), ...)
    registers: tuple = ()
    oracles: tuple = ()
    classes: tuple = ()
    failure: str = FailurePolicy.CLOSED
    rules: tuple = ()

    def param_sort(self, name):
        return dict(self.params).get(name)

    def register(self, name) -> RegisterDecl | None:
        for r in self.registers:
            if r.name == name:
                return r
        return None

    def oracle(self, name) -> OracleFnDecl | None:
        for o in self.oracles:
            if o.name == name:
                return o
        return None

    @property
    def max_outputs(self) -> int:
        return max((r.out_count for r in self.rules), default=0)

    def exclusion_groups(self) -> list[frozenset]:
        groups = []
        for c in self.classes:
            for other in c.excludes:
                groups.append(frozenset((c.name, other)))
        return groups
