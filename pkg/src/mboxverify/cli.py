"""Command-line entry point: verify, gen, classify, encode.

Exit codes of ``verify``: 0 every invariant holds, 1 some invariant is
violated (counterexamples are written), 2 some verdict is unknown, 3 bad
input, 4 solver problems.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .bmc import Bounds, explore, trace_to_json
from .invariants import Holds, Invariant, SymmetryGroup, Unknown, Violated, load_invariants, symmetry_groups
from .mbx import ParseError, SemanticError, UnknownBuiltin, builtin, parse_model
from .netfunc import StaticLoop
from .network import NetworkError, load_network
from .scenarios import SCENARIOS, gen_scenario
from .slicer import GeneralMiddleboxPresent, build_slice, classify_state_class, instance_class, policy_partition

log = logging.getLogger("mboxverify")

ENGINES = ("bmc", "smt-bounded", "smt-causal", "both")
EXIT_HOLDS, EXIT_VIOLATED, EXIT_UNKNOWN, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3, 4


class SolverMissing(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    engine: str = "bmc"
    depth: int = 8
    max_emits: int | None = None
    max_failures: int | None = None  # overrides every invariant's budget
    solver_cmd: str | None = None
    solver_timeout: float = 60.0
    slicing: bool = True
    symmetry: bool = True
    jobs: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.depth < 0 or self.jobs < 1:
            raise ValueError("depth must be >= 0 and jobs >= 1")
        if self.max_failures is not None and self.max_failures < 0:
            raise ValueError("max_failures must be >= 0")

    @property
    def needs_solver(self) -> bool:
        return self.engine != "bmc"

    def resolved_solver(self) -> str:
        from .smt import SOLVER_ENV, default_command

        cmd = self.solver_cmd or default_command()
        if not cmd:
            raise SolverMissing(
                f"engine {self.engine!r} needs an SMT-LIB2 solver but none was found. "
                f"Install z3 (pip install z3-solver) or cvc5, or pass --solver-cmd "
                f"'z3 -smt2 -in' / set {SOLVER_ENV}. The bmc engine needs no solver.")
        return cmd

    def bounds(self, inv: Invariant) -> Bounds:
        return Bounds(depth=self.depth, max_emits=self.max_emits, budget=inv.max_failures)


@dataclass
class Result:
    name: str
    verdict: str  # holds | violated | unknown
    engine: str
    representative: str
    group: int
    slice_nodes: tuple = ()
    slice_rule: str = "full"
    reason: str = ""
    counterexample: str | None = None
    trace: dict | None = None
    seconds: float = 0.0

    def to_json(self, timing: bool = True) -> dict:
        d = {"name": self.name, "verdict": self.verdict, "engine": self.engine,
             "representative": self.representative, "group": self.group,
             "slice": {"nodes": list(self.slice_nodes), "rule": self.slice_rule},
             "reason": self.reason, "counterexample": self.counterexample}
        if timing:
            d["seconds"] = round(self.seconds, 4)
        return d


@dataclass
class Report:
    network: str
    config: RunConfig
    results: list = field(default_factory=list)  # one Result per declared invariant
    groups: list = field(default_factory=list)  # [representative, [members]]
    middleboxes: dict = field(default_factory=dict)  # id -> state class
    warnings: list = field(default_factory=list)

    def counts(self) -> dict:
        c = {"holds": 0, "violated": 0, "unknown": 0}
        for r in self.results:
            c[r.verdict] += 1
        return c

    @property
    def exit_code(self) -> int:
        c = self.counts()
        if c["violated"]:
            return EXIT_VIOLATED
        return EXIT_UNKNOWN if c["unknown"] else EXIT_HOLDS

    def to_json(self, timing: bool = True) -> dict:
        cfg = dataclasses.asdict(self.config)
        cfg.pop("out")
        cfg.pop("jobs")
        return {"network": self.network, "config": cfg, "middleboxes": self.middleboxes,
                "groups": [{"representative": r, "members": m} for r, m in self.groups],
                "invariants": [r.to_json(timing) for r in self.results],
                "summary": self.counts(), "warnings": list(self.warnings)}

    def summary(self) -> str:
        lines = []
        for r in self.results:
            via = "" if r.representative == r.name else f" (via {r.representative})"
            extra = f": {r.reason}" if r.reason else ""
            lines.append(f"{r.name:<32} {r.verdict.upper():<9} [{r.engine}, "
                         f"{len(r.slice_nodes)} nodes, {r.slice_rule}]{via}{extra}")
        c = self.counts()
        lines.append(f"{len(self.results)} invariants in {len(self.groups)} groups: "
                     f"{c['holds']} hold, {c['violated']} violated, {c['unknown']} unknown")
        return "\n".join(lines)


# -- engines ------------------------------------------------------------------

def _smt_bounded(net, inv, cfg: RunConfig, cmd: str):
    from .smt import Sat, Unsat, decode_trace, encode_bounded, run_solver

    b = cfg.bounds(inv)
    script = encode_bounded(net, inv, cfg.depth, b)
    out = run_solver(script.text, cmd, cfg.solver_timeout)
    if isinstance(out, Unsat):
        return Holds(b)
    if isinstance(out, Sat):
        return Violated(decode_trace(out, net, inv, script))
    return Unknown(out.reason)


def _smt_causal(net, inv, cfg: RunConfig, cmd: str):
    from .smt import RestrictionViolated, Unsat, check_restrictions, encode_causal, run_solver

    try:
        check_restrictions(net, inv)
    except RestrictionViolated as e:
        return Unknown(f"outside the causal fragment ({e.criterion}): {e.detail}")
    out = run_solver(encode_causal(net, inv).text, cmd, cfg.solver_timeout)
    if isinstance(out, Unsat):
        return Holds(None)
    if out.kind == "sat":
        return Unknown("causal model is satisfiable; advisory only, may be spurious")
    return Unknown(out.reason)


def run_engine(net, inv: Invariant, cfg: RunConfig, cmd: str | None = None):
    if cfg.engine == "bmc":
        return explore(net, inv, cfg.bounds(inv))
    if cfg.engine == "smt-bounded":
        return _smt_bounded(net, inv, cfg, cmd)
    if cfg.engine == "smt-causal":
        return _smt_causal(net, inv, cfg, cmd)
    a = explore(net, inv, cfg.bounds(inv))
    b = _smt_bounded(net, inv, cfg, cmd)
    if a.kind != b.kind:
        return Unknown(f"engines disagree: bmc {a.kind}, smt-bounded {b.kind}")
    return a


def _check_one(net, inv: Invariant, cfg: RunConfig, cmd, partition):
    """Slice (when enabled), run the engine, and time it.  Returns (slice, verdict, warnings, s)."""
    t0 = time.perf_counter()
    warnings = []
    sl = None
    target = net
    if cfg.slicing:
        try:
            sl = build_slice(net, inv, partition)
            target = net.restrict(sl.nodes)
        except GeneralMiddleboxPresent as e:
            warnings.append(f"{inv.name}: general middleboxes {', '.join(e.ids)} present; "
                            f"verifying the whole network")
    v = run_engine(target, inv, cfg, cmd)
    return sl, v, warnings, time.perf_counter() - t0


# -- pipeline ------------------------------------------------------------------

def _groups(invs, partition, net, symmetry: bool) -> list[SymmetryGroup]:
    if symmetry:
        return symmetry_groups(invs, partition, net)
    return [SymmetryGroup(i, (i,), ()) for i in invs]


def verify(net, invs, cfg: RunConfig = RunConfig()) -> Report:
    """Run the full pipeline on already-loaded inputs and write counterexamples."""
    cmd = cfg.resolved_solver() if cfg.needs_solver else None
    if cfg.max_failures is not None:
        invs = [dataclasses.replace(i, max_failures=cfg.max_failures) for i in invs]
    report = Report(net.name, cfg)
    report.middleboxes = {m.id: instance_class(m) for m in net.middleboxes}
    partition = policy_partition(net)
    groups = _groups(invs, partition, net, cfg.symmetry)

    reps = [g.representative for g in groups]
    if cfg.jobs > 1 and len(reps) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outs = list(pool.map(_check_one, [net] * len(reps), reps, [cfg] * len(reps),
                                 [cmd] * len(reps), [partition] * len(reps)))
    else:
        outs = [_check_one(net, r, cfg, cmd, partition) for r in reps]

    by_name = {}
    out_dir = Path(cfg.out) if cfg.out else None
    for gi, (g, (sl, v, warns, secs)) in enumerate(zip(groups, outs)):
        report.warnings.extend(warns)
        rep = g.representative
        report.groups.append([rep.name, [m.name for m in g.members]])
        nodes = tuple(sorted(sl.nodes)) if sl else tuple(sorted(net.node_ids))
        rule = sl.rule if sl else "full"
        reason = getattr(v, "reason", "") or ""
        cex = trace = None
        if isinstance(v, Violated):
            trace = dict(invariant=rep.name, slice=list(nodes), **trace_to_json(v.trace))
            if out_dir is not None:
                out_dir.mkdir(parents=True, exist_ok=True)
                path = out_dir / f"cex_{_safe(rep.name)}.json"
                path.write_text(json.dumps(trace, indent=2, sort_keys=True) + "\n")
                cex = str(path)
        for m in g.members:
            by_name[m.name] = Result(m.name, v.kind, cfg.engine, rep.name, gi, nodes, rule, reason,
                                     cex if m is rep else None, trace if m is rep else None,
                                     secs if m is rep else 0.0)
    report.results = [by_name[i.name] for i in invs]
    return report


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


# -- subcommands ----------------------------------------------------------------

def _cmd_verify(a) -> int:
    cfg = RunConfig(engine=a.engine, depth=a.depth, max_emits=a.max_emits, max_failures=a.max_failures,
                    solver_cmd=a.solver_cmd, solver_timeout=a.timeout, slicing=not a.no_slicing,
                    symmetry=not a.no_symmetry, jobs=a.jobs, out=a.out)
    net = load_network(a.network)
    invs = load_invariants(a.invariants, net)
    report = verify(net, invs, cfg)
    for w in report.warnings:
        log.warning(w)
    if a.out:
        Path(a.out).mkdir(parents=True, exist_ok=True)
        (Path(a.out) / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    if a.json:
        print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    else:
        print(report.summary())
    return report.exit_code


def _param(s: str):
    k, sep, v = s.partition("=")
    if not sep or not k:
        raise argparse.ArgumentTypeError(f"expected key=value, got {s!r}")
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def _cmd_gen(a) -> int:
    try:
        nd, invs = gen_scenario(a.scenario, **dict(a.params))
    except ValueError as e:
        raise NetworkError(str(e)) from None
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "network.json").write_text(json.dumps(nd, indent=2) + "\n")
    (out / "invariants.json").write_text(json.dumps(invs, indent=2) + "\n")
    print(f"wrote {out / 'network.json'} and {out / 'invariants.json'} ({len(invs)} invariants)")
    return 0


def _load_model(ref: str):
    p = Path(ref)
    if p.exists():
        return parse_model(p.read_text())
    try:
        return builtin(ref)
    except UnknownBuiltin:
        raise NetworkError(f"{ref!r} is neither a model file nor a builtin") from None


def _cmd_classify(a) -> int:
    sc = classify_state_class(_load_model(a.model))
    d = {"class": sc.kind, "provenance": sc.provenance, "declared": sc.declared, "checked": sc.checked,
         "mismatch": sc.mismatch, "advisory": sc.advisory}
    if sc.witness is not None:
        w = sc.witness
        d["witness"] = {"config": repr(w.config), "history": [p.to_json() for p in w.history],
                        "packet": w.packet.to_json(), "full": [p.to_json() for p in w.full],
                        "restricted": [p.to_json() for p in w.restricted]}
    if a.json:
        print(json.dumps(d, indent=2, sort_keys=True))
    else:
        print(f"{sc.kind} ({sc.provenance})")
        if sc.checked and sc.checked != sc.kind:
            print(f"bounded check says {sc.checked}")
        if "witness" in d:
            print("witness: " + json.dumps(d["witness"]))
        if sc.advisory:
            print(f"note: {sc.advisory}")
    return 0


def _cmd_encode(a) -> int:
    from .smt import check_restrictions, encode_bounded, encode_causal

    net = load_network(a.network)
    invs = load_invariants(a.invariants, net)
    if a.invariant:
        invs = [i for i in invs if i.name == a.invariant]
        if not invs:
            raise NetworkError(f"no invariant named {a.invariant!r}")
    out = Path(a.out)
    for inv in invs:
        if a.mode == "bounded":
            script = encode_bounded(net, inv, a.depth, Bounds(depth=a.depth, max_emits=a.max_emits))
        else:
            check_restrictions(net, inv)
            script = encode_causal(net, inv)
        path = out if len(invs) == 1 else out.with_name(f"{out.stem}.{_safe(inv.name)}{out.suffix or '.smt2'}")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(script.text)
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mboxverify", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    v = sub.add_parser("verify", help="check invariants of a network")
    v.add_argument("--network", required=True)
    v.add_argument("--invariants", required=True)
    v.add_argument("--engine", choices=ENGINES, default="bmc")
    v.add_argument("--depth", type=int, default=8)
    v.add_argument("--max-emits", type=int)
    v.add_argument("--max-failures", type=int)
    v.add_argument("--solver-cmd")
    v.add_argument("--timeout", type=float, default=60.0, help="per-query solver timeout (s)")
    v.add_argument("--no-slicing", action="store_true")
    v.add_argument("--no-symmetry", action="store_true")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--out", help="directory for report.json and counterexamples")
    v.add_argument("--json", action="store_true", help="print the report as JSON")
    v.set_defaults(fn=_cmd_verify)

    g = sub.add_parser("gen", help="generate a scenario's network and invariant files")
    g.add_argument("scenario", choices=sorted(SCENARIOS))
    g.add_argument("params", nargs="*", type=_param, help="key=value scenario parameters")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_gen)

    c = sub.add_parser("classify", help="classify a middlebox model's state")
    c.add_argument("--model", required=True, help="model file or builtin name")
    c.add_argument("--json", action="store_true")
    c.set_defaults(fn=_cmd_classify)

    e = sub.add_parser("encode", help="write SMT-LIB2 scripts")
    e.add_argument("--network", required=True)
    e.add_argument("--invariants", required=True)
    e.add_argument("--invariant", help="only this invariant")
    e.add_argument("--mode", choices=("bounded", "causal"), default="bounded")
    e.add_argument("--depth", type=int, default=8)
    e.add_argument("--max-emits", type=int)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=_cmd_encode)
    return ap


def main(argv=None) -> int:
    from .smt import RestrictionViolated, SolverError, UniverseTooLarge

    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return a.fn(a)
    except NetworkError as e:
        print(f"error: invalid input at {e}", file=sys.stderr)
    except StaticLoop as e:
        print(f"error: {e} (cycle: {' -> '.join(e.nodes)})", file=sys.stderr)
    except (ParseError, SemanticError, RestrictionViolated, UniverseTooLarge, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
    except (SolverMissing, SolverError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
