"""Run an external SMT-LIB2 solver in a subprocess and parse its answer."""
from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field

SOLVER_ENV = "MBOXVERIFY_SOLVER"

_KNOWN = (
    ("z3", "z3 -smt2 -in"),
    ("cvc5", "cvc5 --lang smt2 --produce-models --incremental"),
)


class SolverError(Exception):
    pass


@dataclass(frozen=True)
class Sat:
    model: dict = field(default_factory=dict)  # symbol -> int | bool
    text: str = ""  # raw get-value output
    kind = "sat"


@dataclass(frozen=True)
class Unsat:
    kind = "unsat"


@dataclass(frozen=True)
class SolverUnknown:
    reason: str
    kind = "unknown"


def default_command() -> str | None:
    """The solver command line: $MBOXVERIFY_SOLVER, else z3 or cvc5 from PATH."""
    env = os.environ.get(SOLVER_ENV)
    if env:
        return env
    for exe, cmd in _KNOWN:
        if shutil.which(exe):
            return cmd
    return None


def run_solver(script: str, cmd: str | None = None, timeout: float = 60.0):
    """Feed ``script`` to the solver and return Sat / Unsat / SolverUnknown.

    ``cmd`` may contain ``{file}``; the script is then written to a temp file
    and passed by name, otherwise it goes to stdin.
    """
    cmd = cmd or default_command()
    if not cmd:
        raise SolverError(f"no SMT solver found: install z3 or set {SOLVER_ENV}")
    text = str(script)
    path = None
    try:
        if "{file}" in cmd:
            fd, path = tempfile.mkstemp(suffix=".smt2")
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            argv = shlex.split(cmd.replace("{file}", path))
            stdin = None
        else:
            argv = shlex.split(cmd)
            stdin = text
        try:
            proc = subprocess.run(argv, input=stdin, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            return SolverUnknown(f"timeout after {timeout}s")
        except OSError as e:
            raise SolverError(f"cannot run solver {argv[0]!r}: {e}") from None
    finally:
        if path:
            os.unlink(path)
    out = proc.stdout.strip()
    first, _, rest = out.partition("\n")
    first = first.strip()
    if first == "unsat":
        return Unsat()
    if first == "unknown":
        return SolverUnknown("solver returned unknown")
    if first == "sat":
        if proc.returncode != 0 and "(error" in rest:
            raise SolverError(f"solver error after sat: {rest[:500]}")
        return Sat(parse_values(rest), rest)
    raise SolverError(f"solver exited {proc.returncode}: {(out or proc.stderr)[:500]}")


# -- s-expressions ---------------------------------------------------------------

def _tokens(s: str):
    i, n = 0, len(s)
    while i < n:
        c = s[i]
        if c in "()":
            yield c
            i += 1
        elif c.isspace():
            i += 1
        elif c == "|":
            j = s.index("|", i + 1)
            yield s[i + 1:j]
            i = j + 1
        else:
            j = i
            while j < n and not s[j].isspace() and s[j] not in "()":
                j += 1
            yield s[i:j]
            i = j


def parse_sexprs(s: str) -> list:
    stack: list = [[]]
    for tok in _tokens(s):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise SolverError("unbalanced solver output")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SolverError("unbalanced solver output")
    return stack[0]


def _value(v):
    if isinstance(v, list):
        if len(v) == 2 and v[0] == "-":
            return -_value(v[1])
        raise SolverError(f"unsupported value {v!r}")
    if v == "true":
        return True
    if v == "false":
        return False
    try:
        return int(v)
    except ValueError:
        raise SolverError(f"unsupported value {v!r}") from None


def parse_values(text: str) -> dict:
    """Parse concatenated ``get-value`` answers into ``{symbol: value}``."""
    out = {}
    for block in parse_sexprs(text):
        if not isinstance(block, list):
            continue
        for pair in block:
            if isinstance(pair, list) and len(pair) == 2 and isinstance(pair[0], str):
                out[pair[0]] = _value(pair[1])
    return out
