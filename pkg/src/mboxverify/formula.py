"""First-order formula skeletons produced for middleboxes and the network."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable


@dataclass(frozen=True)
class FormulaTemplate:
    """One instantiated axiom.

    ``text`` is the rendered formula (temporal operators as ◇ and □),
    ``symbols`` the instance-specific symbols it mentions. ``evaluator``,
    when present, decides the axiom over a concrete trace.
    """

    name: str
    kind: str  # "state" | "send" | "omega" | "host-egress"
    owner: str
    text: str
    symbols: frozenset = frozenset()
    evaluator: Callable | None = field(default=None, compare=False, hash=False, repr=False)

    def holds_on(self, trace, net) -> bool:
        if self.evaluator is None:
            raise NotImplementedError(f"{self.name} has no trace evaluator")
        return self.evaluator(trace, net)

    def __str__(self):
        return self.text
